#include "remember/corpus.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "remember/fsio.hpp"

namespace remember {

using ordered_json = nlohmann::ordered_json;

// --- file helpers ------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return content;
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// --- Corpus ------------------------------------------------------------------

Corpus::Corpus(std::size_t dim, std::vector<ReferenceCase> cases,
               std::vector<AnchorSet> anchors, std::string provenance)
    : dim_(dim), cases_(std::move(cases)), anchors_(std::move(anchors)),
      provenance_(std::move(provenance)) {
  if (dim_ == 0) throw DomainError("Corpus: dim must be >= 1");
  index_.reserve(cases_.size());
  for (std::size_t i = 0; i < cases_.size(); ++i) {
    const ReferenceCase& c = cases_[i];
    if (c.id.empty()) throw DomainError("Corpus: empty case id");
    const Vector* embs[4] = {&c.image_embedding, &c.abn_embedding, &c.dx_embedding, &c.desc_embedding};
    for (const Vector* e : embs) {
      if (e->size() != dim_) {
        throw ShapeError("Corpus: case '" + c.id + "' embedding length does not match corpus dim");
      }
    }
    if (!index_.emplace(c.id, i).second) {
      throw DomainError("Corpus: duplicate case id '" + c.id + "'");
    }
  }
  for (const AnchorSet& set : anchors_) {
    std::size_t arity = static_cast<std::size_t>(task_arity(set.task));
    if (set.classes.size() != arity || set.anchors.size() != arity) {
      throw ShapeError("Corpus: anchor set for task '" + std::string(to_string(set.task)) +
                       "' does not match task arity");
    }
    for (const Vector& a : set.anchors) {
      if (a.size() != dim_) throw ShapeError("Corpus: anchor embedding length does not match corpus dim");
    }
  }
}

const ReferenceCase& Corpus::by_id(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw LookupError("no case with id '" + id + "'");
  return cases_[it->second];
}

bool Corpus::contains(const std::string& id) const { return index_.count(id) != 0; }

const AnchorSet* Corpus::find_anchors(Task task) const {
  for (const AnchorSet& set : anchors_) {
    if (set.task == task) return &set;
  }
  return nullptr;
}

// --- pseudo-text templates -----------------------------------------------------

std::string_view abnormality_text(Abnormality a) {
  switch (a) {
    case Abnormality::Normal:
      return "MRI image shows normal brain without evidence of significant structures or "
             "pathological changes.";
    case Abnormality::MtlAtrophy:
      return "MRI image illustrates volume reduction and structural atrophy in the medial "
             "temporal lobes, including hippocampal shrinkage.";
    case Abnormality::Wmh:
      return "MRI image reveals hyperintense lesions within cerebral white matter regions, "
             "indicating white matter hyperintensities.";
    case Abnormality::OtherAtrophy:
      return "MRI image indicates brain atrophy in cortical or subcortical regions other than "
             "medial temporal lobes, with notable structural volume loss.";
  }
  throw DomainError("abnormality_text: bad value");
}

std::string_view dementia_text(Dementia d) {
  switch (d) {
    case Dementia::NonDementia:
      return "MRI image presents no evident dementia-related structural changes, reflecting a "
             "normal cognitive state.";
    case Dementia::Alzheimers:
      return "MRI image shows characteristic patterns of brain atrophy suggestive of "
             "Alzheimer's Disease pathology.";
    case Dementia::OtherDementia:
      return "MRI image shows structural brain abnormalities indicative of dementia types other "
             "than Alzheimer's Disease, such as Vascular dementia or Dementia with Lewy bodies.";
  }
  throw DomainError("dementia_text: bad value");
}

std::string_view severity_text(Severity s) {
  switch (s) {
    case Severity::NonDemented:
      return "MRI image depicts normal brain anatomy without visible dementia-related atrophic "
             "or pathological changes.";
    case Severity::VeryMild:
      return "MRI image presents subtle and minimal structural changes, consistent with very "
             "mild cognitive impairment or early-stage dementia.";
    case Severity::Mild:
      return "MRI image illustrates noticeable atrophic changes in brain regions, indicative of "
             "mild dementia progression.";
    case Severity::Moderate:
      return "MRI image shows pronounced structural atrophy and pathological changes "
             "characteristic of moderate dementia severity.";
  }
  throw DomainError("severity_text: bad value");
}

PseudoText pseudo_text(Abnormality a, Dementia d) {
  PseudoText t;
  t.description = "";  // free text comes from the case itself
  t.abnormality = std::string(abnormality_text(a));
  t.dementia = std::string(dementia_text(d));
  t.combined = t.abnormality + " " + t.dementia;
  return t;
}

// --- binary blob -----------------------------------------------------------------

namespace {

constexpr char kBlobMagic[4] = {'R', 'E', 'M', 'B'};
constexpr std::uint32_t kBlobVersion = 1;
constexpr std::size_t kBlobHeaderSize = 16;
constexpr std::size_t kRowsPerCase = 4;

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_row(std::string& out, const Vector& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v[i]));
    put_u32_le(out, bits);
  }
}

Vector get_row(const unsigned char* base, std::size_t row, std::size_t dim) {
  Vector v(dim);
  const unsigned char* p = base + kBlobHeaderSize + row * dim * 4;
  for (std::size_t i = 0; i < dim; ++i) {
    v[i] = static_cast<double>(std::bit_cast<float>(get_u32_le(p + i * 4)));
  }
  return v;
}

}  // namespace

void save_index(const Corpus& corpus, const std::filesystem::path& manifest_path,
                const std::filesystem::path& blob_path) {
  const std::size_t case_rows = corpus.size() * kRowsPerCase;
  std::size_t anchor_rows = 0;
  for (const AnchorSet& set : corpus.anchors()) anchor_rows += set.anchors.size();
  const std::size_t total_rows = case_rows + anchor_rows;

  // blob
  std::string blob;
  blob.reserve(kBlobHeaderSize + total_rows * corpus.dim() * 4);
  blob.append(kBlobMagic, 4);
  put_u32_le(blob, kBlobVersion);
  put_u32_le(blob, static_cast<std::uint32_t>(total_rows));
  put_u32_le(blob, static_cast<std::uint32_t>(corpus.dim()));
  for (const ReferenceCase& c : corpus.cases()) {
    put_row(blob, c.image_embedding);
    put_row(blob, c.abn_embedding);
    put_row(blob, c.dx_embedding);
    put_row(blob, c.desc_embedding);
  }
  for (const AnchorSet& set : corpus.anchors()) {
    for (const Vector& a : set.anchors) put_row(blob, a);
  }

  // manifest
  ordered_json manifest;
  manifest["version"] = 1;
  manifest["dim"] = corpus.dim();
  if (!corpus.provenance().empty()) manifest["provenance"] = corpus.provenance();
  manifest["cases"] = ordered_json::array();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const ReferenceCase& c = corpus.at(i);
    ordered_json jc;
    jc["id"] = c.id;
    jc["abnormality"] = to_string(c.abnormality);
    jc["dementia"] = to_string(c.dementia);
    jc["description"] = c.description;
    jc["row"] = i * kRowsPerCase;
    manifest["cases"].push_back(std::move(jc));
  }
  manifest["anchors"] = ordered_json::array();
  std::size_t next_row = case_rows;
  for (const AnchorSet& set : corpus.anchors()) {
    ordered_json js;
    js["task"] = to_string(set.task);
    js["classes"] = set.classes;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < set.anchors.size(); ++i) rows.push_back(next_row++);
    js["rows"] = rows;
    manifest["anchors"].push_back(std::move(js));
  }

  write_file(manifest_path, manifest.dump(2) + "\n");
  write_file(blob_path, blob);
}

Corpus load_index(const std::filesystem::path& manifest_path,
                  const std::filesystem::path& blob_path,
                  std::vector<std::string>* warnings) {
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };

  ordered_json manifest;
  try {
    manifest = ordered_json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("manifest '" + manifest_path.string() + "' is not valid JSON: " + e.what());
  }
  if (!manifest.is_object()) throw LoadError("manifest root must be a JSON object");

  static const std::set<std::string> known_keys = {"version", "dim", "provenance", "cases", "anchors"};
  for (auto it = manifest.begin(); it != manifest.end(); ++it) {
    if (!known_keys.count(it.key())) warn("ignoring unknown manifest field '" + it.key() + "'");
  }

  if (!manifest.contains("version") || !manifest["version"].is_number_integer() ||
      manifest["version"].get<int>() != 1) {
    throw LoadError("manifest version missing or unsupported (expected 1)");
  }
  if (!manifest.contains("dim") || !manifest["dim"].is_number_unsigned()) {
    throw LoadError("manifest is missing a valid 'dim'");
  }
  const std::size_t dim = manifest["dim"].get<std::size_t>();
  if (dim == 0) throw LoadError("manifest dim must be >= 1");

  const std::string blob = read_file(blob_path);
  if (blob.size() < kBlobHeaderSize) throw LoadError("blob is too small to hold a header");
  const unsigned char* base = reinterpret_cast<const unsigned char*>(blob.data());
  if (std::memcmp(base, kBlobMagic, 4) != 0) throw LoadError("blob has wrong magic (expected REMB)");
  const std::uint32_t blob_version = get_u32_le(base + 4);
  if (blob_version != kBlobVersion) throw LoadError("blob version unsupported");
  const std::size_t row_count = get_u32_le(base + 8);
  const std::size_t blob_dim = get_u32_le(base + 12);
  if (blob_dim != dim) {
    throw LoadError("dimension mismatch: manifest says " + std::to_string(dim) + ", blob says " +
                    std::to_string(blob_dim));
  }
  // Rows fully contained in the file. Anything past this is truncated.
  const std::size_t complete_rows = (blob.size() - kBlobHeaderSize) / (dim * 4);

  auto require_rows = [&](std::size_t first, std::size_t count, const std::string& owner) {
    if (first + count > row_count) {
      throw LoadError("manifest row range out of bounds for " + owner);
    }
    if (first + count > complete_rows) {
      throw LoadError("blob truncated: " + owner + " needs rows " + std::to_string(first) + ".." +
                      std::to_string(first + count - 1) + " but only " +
                      std::to_string(complete_rows) + " complete rows are present");
    }
  };

  std::vector<ReferenceCase> cases;
  if (manifest.contains("cases")) {
    if (!manifest["cases"].is_array()) throw LoadError("manifest 'cases' must be an array");
    cases.reserve(manifest["cases"].size());
    for (const auto& jc : manifest["cases"]) {
      if (!jc.is_object()) throw LoadError("manifest case entries must be objects");
      for (const char* key : {"id", "abnormality", "dementia", "description", "row"}) {
        if (!jc.contains(key)) throw LoadError(std::string("manifest case is missing '") + key + "'");
      }
      ReferenceCase c;
      c.id = jc["id"].get<std::string>();
      try {
        c.abnormality = abnormality_from_string(jc["abnormality"].get<std::string>());
        c.dementia = dementia_from_string(jc["dementia"].get<std::string>());
      } catch (const DomainError& e) {
        throw LoadError("case '" + c.id + "': " + e.what());
      }
      c.description = jc["description"].get<std::string>();
      const std::size_t row = jc["row"].get<std::size_t>();
      require_rows(row, kRowsPerCase, "case '" + c.id + "'");
      c.image_embedding = get_row(base, row + 0, dim);
      c.abn_embedding = get_row(base, row + 1, dim);
      c.dx_embedding = get_row(base, row + 2, dim);
      c.desc_embedding = get_row(base, row + 3, dim);
      cases.push_back(std::move(c));
    }
  }

  std::vector<AnchorSet> anchor_sets;
  if (manifest.contains("anchors")) {
    if (!manifest["anchors"].is_array()) throw LoadError("manifest 'anchors' must be an array");
    for (const auto& js : manifest["anchors"]) {
      AnchorSet set;
      try {
        set.task = task_from_string(js.at("task").get<std::string>());
      } catch (const DomainError& e) {
        throw LoadError(std::string("anchor set: ") + e.what());
      }
      set.classes = js.at("classes").get<std::vector<std::string>>();
      const auto rows = js.at("rows").get<std::vector<std::size_t>>();
      const std::size_t arity = static_cast<std::size_t>(task_arity(set.task));
      if (set.classes.size() != arity || rows.size() != arity) {
        throw LoadError("anchor set for task '" + std::string(to_string(set.task)) +
                        "' does not match task arity " + std::to_string(arity));
      }
      for (std::size_t r : rows) {
        require_rows(r, 1, "anchor set '" + std::string(to_string(set.task)) + "'");
        set.anchors.push_back(get_row(base, r, dim));
      }
      anchor_sets.push_back(std::move(set));
    }
  }

  std::string provenance;
  if (manifest.contains("provenance")) provenance = manifest["provenance"].get<std::string>();

  try {
    return Corpus(dim, std::move(cases), std::move(anchor_sets), std::move(provenance));
  } catch (const Error& e) {
    // Duplicate ids and friends become load errors when they come from disk.
    throw LoadError(std::string("invalid corpus in '") + manifest_path.string() + "': " + e.what());
  }
}

// --- synthetic corpus ---------------------------------------------------------------

Corpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw DomainError("generate_synthetic: n_classes must be >= 2");
  if (spec.n_per_class < 1) throw DomainError("generate_synthetic: n_per_class must be >= 1");
  if (spec.dim < 2 || spec.dim < spec.n_classes) {
    throw DomainError("generate_synthetic: dim must be >= max(2, n_classes)");
  }
  if (!(spec.noise_sigma > 0.0)) throw DomainError("generate_synthetic: noise_sigma must be > 0");
  if (spec.cluster_separation < 0.0) throw DomainError("generate_synthetic: separation must be >= 0");

  const std::size_t dim = static_cast<std::size_t>(spec.dim);
  RngStream rng(spec.seed);

  std::vector<Vector> means;
  for (int c = 0; c < spec.n_classes; ++c) {
    Vector m(dim);
    m[static_cast<std::size_t>(c)] = spec.cluster_separation * spec.noise_sigma;
    means.push_back(std::move(m));
  }

  auto noisy = [&](const Vector& mean) {
    Vector v(dim);
    for (std::size_t i = 0; i < dim; ++i) v[i] = mean[i] + rng.normal(0.0, spec.noise_sigma);
    return v;
  };

  std::vector<ReferenceCase> cases;
  cases.reserve(static_cast<std::size_t>(spec.n_classes) * spec.n_per_class);
  int serial = 0;
  for (int c = 0; c < spec.n_classes; ++c) {
    Abnormality abn = static_cast<Abnormality>(c % kAbnormalityClasses);
    Dementia dem = dementia_for_abnormality(abn);
    for (int j = 0; j < spec.n_per_class; ++j, ++serial) {
      ReferenceCase rc;
      char idbuf[64];
      std::snprintf(idbuf, sizeof idbuf, "%s-%04d", spec.id_prefix.c_str(), serial);
      rc.id = idbuf;
      rc.abnormality = abn;
      rc.dementia = dem;
      rc.description = std::string(abnormality_text(abn));
      rc.image_embedding = noisy(means[c]);
      rc.abn_embedding = noisy(means[c]);
      rc.dx_embedding = noisy(means[c]);
      rc.desc_embedding = noisy(means[c]);
      cases.push_back(std::move(rc));
    }
  }

  // Anchors are the exact class means (averaged when several clusters share a
  // label), so zero-shot behaviour on this corpus has a closed-form oracle.
  std::vector<AnchorSet> anchors;
  auto mean_of = [&](const std::vector<int>& clusters) {
    Vector m(dim);
    for (int c : clusters) {
      for (std::size_t i = 0; i < dim; ++i) m[i] += means[static_cast<std::size_t>(c)][i];
    }
    for (std::size_t i = 0; i < dim; ++i) m[i] /= static_cast<double>(clusters.size());
    return m;
  };

  {
    // Abnormality anchors need every abnormality class to own >= 1 cluster.
    std::vector<std::vector<int>> groups(kAbnormalityClasses);
    for (int c = 0; c < spec.n_classes; ++c) groups[static_cast<std::size_t>(c % kAbnormalityClasses)].push_back(c);
    bool complete = true;
    for (const auto& g : groups) complete = complete && !g.empty();
    if (complete) {
      AnchorSet set;
      set.task = Task::Abnormality;
      set.classes = class_names(Task::Abnormality);
      for (const auto& g : groups) set.anchors.push_back(mean_of(g));
      anchors.push_back(std::move(set));
    }
  }
  {
    std::vector<std::vector<int>> groups(kDementiaClasses);
    for (int c = 0; c < spec.n_classes; ++c) {
      Dementia d = dementia_for_abnormality(static_cast<Abnormality>(c % kAbnormalityClasses));
      groups[static_cast<std::size_t>(d)].push_back(c);
    }
    bool complete = true;
    for (const auto& g : groups) complete = complete && !g.empty();
    if (complete) {
      AnchorSet set;
      set.task = Task::DementiaType;
      set.classes = class_names(Task::DementiaType);
      for (const auto& g : groups) set.anchors.push_back(mean_of(g));
      anchors.push_back(std::move(set));
    }
  }
  {
    // Severity has no ground truth in synthetic data; alias severity class s
    // to the clusters with index s mod 4 so the task stays exercisable.
    std::vector<std::vector<int>> groups(kSeverityClasses);
    for (int c = 0; c < spec.n_classes; ++c) groups[static_cast<std::size_t>(c % kSeverityClasses)].push_back(c);
    bool complete = true;
    for (const auto& g : groups) complete = complete && !g.empty();
    if (complete) {
      AnchorSet set;
      set.task = Task::Severity;
      set.classes = class_names(Task::Severity);
      for (const auto& g : groups) set.anchors.push_back(mean_of(g));
      anchors.push_back(std::move(set));
    }
  }

  char prov[128];
  std::snprintf(prov, sizeof prov, "synthetic(classes=%d, per_class=%d, dim=%d, sep=%g, sigma=%g, seed=%llu)",
                spec.n_classes, spec.n_per_class, spec.dim, spec.cluster_separation, spec.noise_sigma,
                static_cast<unsigned long long>(spec.seed));
  return Corpus(dim, std::move(cases), std::move(anchors), prov);
}

}  // namespace remember
