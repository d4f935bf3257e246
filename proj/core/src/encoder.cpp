#include "remember/encoder.hpp"

#include <cctype>
#include <cmath>

#include <nlohmann/json.hpp>

#include "checkpoint_util.hpp"
#include "remember/fsio.hpp"

namespace remember {

namespace {

// Row-normalizes `pre` in place and returns the row norms. Zero rows are a
// numeric error: a degenerate projection cannot be embedded.
std::vector<double> normalize_rows(Matrix& pre) {
  std::vector<double> norms(pre.rows());
  for (std::size_t i = 0; i < pre.rows(); ++i) {
    double acc = 0.0;
    for (double v : pre.row(i)) acc += v * v;
    double n = std::sqrt(acc);
    if (n == 0.0) throw NumericError("encoder: zero pre-normalization vector");
    norms[i] = n;
    for (double& v : pre.row(i)) v /= n;
  }
  return norms;
}

Matrix affine(const Matrix& x, const Matrix& w, const Vector& b) {
  Matrix out = matmul(x, w);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[j];
  }
  return out;
}

// Backward through per-row L2 normalization: given v = a/|a| and dL/dv,
// dL/da = (g - (g.v) v) / |a|.
Matrix normalize_rows_backward(const Matrix& g_v, const Matrix& v, const std::vector<double>& norms) {
  Matrix g_a(g_v.rows(), g_v.cols());
  for (std::size_t i = 0; i < g_v.rows(); ++i) {
    double gv_dot_v = 0.0;
    for (std::size_t j = 0; j < g_v.cols(); ++j) gv_dot_v += g_v(i, j) * v(i, j);
    for (std::size_t j = 0; j < g_v.cols(); ++j) {
      g_a(i, j) = (g_v(i, j) - gv_dot_v * v(i, j)) / norms[i];
    }
  }
  return g_a;
}

Vector column_sums(const Matrix& m) {
  Vector out(m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += m(i, j);
  }
  return out;
}

}  // namespace

Vector ToyDualEncoder::embed_image(const Vector& raw) const {
  if (raw.size() != raw_dim) throw ShapeError("embed_image: feature width mismatch");
  Vector pre = vecmat(raw, w_img);
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += b_img[i];
  return l2_normalized(pre);
}

Vector ToyDualEncoder::embed_text(const Vector& features) const {
  if (features.size() != feat_dim) throw ShapeError("embed_text: feature width mismatch");
  Vector pre = vecmat(features, w_txt);
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += b_txt[i];
  return l2_normalized(pre);
}

ToyDualEncoder make_encoder(std::size_t raw_dim, std::size_t feat_dim, std::size_t dim,
                            double tau, EncoderInit init, RngStream& rng) {
  if (raw_dim == 0 || feat_dim == 0 || dim == 0) throw DomainError("make_encoder: zero dimension");
  if (!(tau > 0.0)) throw DomainError("make_encoder: tau must be > 0");
  ToyDualEncoder enc;
  enc.raw_dim = raw_dim;
  enc.feat_dim = feat_dim;
  enc.dim = dim;
  enc.tau = tau;
  enc.b_img = Vector(dim);
  enc.b_txt = Vector(dim);
  if (init == EncoderInit::IdentityAligned) {
    enc.w_img = Matrix(raw_dim, dim, 0.0);
    for (std::size_t i = 0; i < std::min(raw_dim, dim); ++i) enc.w_img(i, i) = 1.0;
    enc.w_txt = Matrix(feat_dim, dim, 0.0);
    for (std::size_t i = 0; i < std::min(feat_dim, dim); ++i) enc.w_txt(i, i) = 1.0;
  } else {
    enc.w_img = kaiming_uniform(raw_dim, raw_dim, dim, rng);
    enc.w_txt = kaiming_uniform(feat_dim, feat_dim, dim, rng);
  }
  return enc;
}

ContrastiveResult contrastive_loss(const PairBatch& batch, const ToyDualEncoder& encoder,
                                   bool symmetric) {
  const std::size_t n = batch.image_features.rows();
  if (n == 0) throw ShapeError("contrastive_loss: empty batch");
  if (batch.text_features.rows() != n) {
    throw ShapeError("contrastive_loss: image/text pair count mismatch");
  }
  if (batch.image_features.cols() != encoder.raw_dim ||
      batch.text_features.cols() != encoder.feat_dim) {
    throw ShapeError("contrastive_loss: feature width does not match encoder");
  }
  const double tau = encoder.tau;

  Matrix v = affine(batch.image_features, encoder.w_img, encoder.b_img);
  std::vector<double> v_norms = normalize_rows(v);
  Matrix t = affine(batch.text_features, encoder.w_txt, encoder.b_txt);
  std::vector<double> t_norms = normalize_rows(t);

  // Cosine similarity matrix (rows image, cols text); embeddings are unit.
  Matrix s = matmul_transpose_b(v, t);

  const double dn = static_cast<double>(n);
  const double direction_weight = symmetric ? 0.5 : 1.0;
  double loss = 0.0;
  Matrix g_s(n, n, 0.0);

  // image -> text: softmax over each row.
  for (std::size_t i = 0; i < n; ++i) {
    double max = s(i, 0) / tau;
    for (std::size_t j = 1; j < n; ++j) max = std::max(max, s(i, j) / tau);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(s(i, j) / tau - max);
    double lse = max + std::log(sum);
    loss += direction_weight * (lse - s(i, i) / tau) / dn;
    for (std::size_t j = 0; j < n; ++j) {
      double p = std::exp(s(i, j) / tau - lse);
      g_s(i, j) += direction_weight * (p - (i == j ? 1.0 : 0.0)) / (dn * tau);
    }
  }
  // text -> image: softmax over each column.
  if (symmetric) {
    for (std::size_t j = 0; j < n; ++j) {
      double max = s(0, j) / tau;
      for (std::size_t i = 1; i < n; ++i) max = std::max(max, s(i, j) / tau);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += std::exp(s(i, j) / tau - max);
      double lse = max + std::log(sum);
      loss += 0.5 * (lse - s(j, j) / tau) / dn;
      for (std::size_t i = 0; i < n; ++i) {
        double p = std::exp(s(i, j) / tau - lse);
        g_s(i, j) += 0.5 * (p - (i == j ? 1.0 : 0.0)) / (dn * tau);
      }
    }
  }
  if (!std::isfinite(loss)) throw NumericError("contrastive_loss: non-finite loss");

  Matrix g_v = matmul(g_s, t);                // dL/dV
  Matrix g_t = matmul_transpose_a(g_s, v);    // dL/dT
  Matrix g_av = normalize_rows_backward(g_v, v, v_norms);
  Matrix g_at = normalize_rows_backward(g_t, t, t_norms);

  ContrastiveResult result;
  result.loss = loss;
  result.grads.w_img = matmul_transpose_a(batch.image_features, g_av);
  result.grads.b_img = column_sums(g_av);
  result.grads.w_txt = matmul_transpose_a(batch.text_features, g_at);
  result.grads.b_txt = column_sums(g_at);
  return result;
}

EncoderTrainHistory train_contrastive(ToyDualEncoder& encoder, const PairBatch& pairs,
                                      const EncoderTrainConfig& config) {
  const std::size_t n = pairs.image_features.rows();
  if (n == 0) throw ShapeError("train_contrastive: no pairs");
  if (config.batch_size < 1) throw ConfigError("train_contrastive: batch_size must be >= 1");
  if (config.epochs < 0) throw ConfigError("train_contrastive: epochs must be >= 0");
  if (config.lr < 0.0) throw ConfigError("train_contrastive: lr must be >= 0");

  EncoderTrainHistory history;
  history.initial_loss = contrastive_loss(pairs, encoder, config.symmetric).loss;

  AdamConfig adam{config.lr, 0.9, 0.999, 1e-8};
  AdamState st_wi(encoder.w_img.data().size(), adam);
  AdamState st_bi(encoder.b_img.size(), adam);
  AdamState st_wt(encoder.w_txt.data().size(), adam);
  AdamState st_bt(encoder.b_txt.size(), adam);

  RngStream rng(config.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      std::size_t count = std::min(bs, n - start);
      PairBatch b;
      b.image_features = Matrix(count, encoder.raw_dim);
      b.text_features = Matrix(count, encoder.feat_dim);
      for (std::size_t r = 0; r < count; ++r) {
        std::size_t src = order[start + r];
        for (std::size_t c = 0; c < encoder.raw_dim; ++c) {
          b.image_features(r, c) = pairs.image_features(src, c);
        }
        for (std::size_t c = 0; c < encoder.feat_dim; ++c) {
          b.text_features(r, c) = pairs.text_features(src, c);
        }
      }
      ContrastiveResult res = contrastive_loss(b, encoder, config.symmetric);
      adam_step(encoder.w_img.data(), res.grads.w_img.data(), st_wi);
      adam_step(encoder.b_img.data(), res.grads.b_img.data(), st_bi);
      adam_step(encoder.w_txt.data(), res.grads.w_txt.data(), st_wt);
      adam_step(encoder.b_txt.data(), res.grads.b_txt.data(), st_bt);
      loss_sum += res.loss;
      ++batches;
    }
    history.epoch_mean_loss.push_back(loss_sum / static_cast<double>(batches));
  }

  history.final_loss = contrastive_loss(pairs, encoder, config.symmetric).loss;
  return history;
}

// --- text featurizer -----------------------------------------------------------

Vector text_features(std::string_view text, std::size_t feat_dim) {
  if (feat_dim == 0) throw DomainError("text_features: feat_dim must be >= 1");
  Vector out(feat_dim);
  std::uint64_t hash = 14695981039346656037ULL;
  bool in_token = false;
  auto flush = [&]() {
    if (in_token) {
      out[hash % feat_dim] += 1.0;
      hash = 14695981039346656037ULL;
      in_token = false;
    }
  };
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(raw)));
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      hash = (hash ^ c) * 1099511628211ULL;  // FNV-1a
      in_token = true;
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::vector<AnchorSet> build_anchor_sets(const ToyDualEncoder& encoder) {
  std::vector<AnchorSet> sets;
  {
    AnchorSet s;
    s.task = Task::Abnormality;
    s.classes = class_names(Task::Abnormality);
    for (int i = 0; i < kAbnormalityClasses; ++i) {
      s.anchors.push_back(encoder.embed_text(
          text_features(abnormality_text(static_cast<Abnormality>(i)), encoder.feat_dim)));
    }
    sets.push_back(std::move(s));
  }
  {
    AnchorSet s;
    s.task = Task::DementiaType;
    s.classes = class_names(Task::DementiaType);
    for (int i = 0; i < kDementiaClasses; ++i) {
      s.anchors.push_back(encoder.embed_text(
          text_features(dementia_text(static_cast<Dementia>(i)), encoder.feat_dim)));
    }
    sets.push_back(std::move(s));
  }
  {
    AnchorSet s;
    s.task = Task::Severity;
    s.classes = class_names(Task::Severity);
    for (int i = 0; i < kSeverityClasses; ++i) {
      s.anchors.push_back(encoder.embed_text(
          text_features(severity_text(static_cast<Severity>(i)), encoder.feat_dim)));
    }
    sets.push_back(std::move(s));
  }
  return sets;
}

// --- checkpoints ------------------------------------------------------------------

void save_encoder(const ToyDualEncoder& encoder, const std::filesystem::path& path) {
  std::string out;
  out += "{\n";
  out += "  \"version\": 1,\n";
  out += "  \"kind\": \"dual-encoder\",\n";
  out += "  \"raw_dim\": " + std::to_string(encoder.raw_dim) + ",\n";
  out += "  \"feat_dim\": " + std::to_string(encoder.feat_dim) + ",\n";
  out += "  \"dim\": " + std::to_string(encoder.dim) + ",\n";
  out += "  \"tau\": ";
  detail::append_double(out, encoder.tau);
  out += ",\n  \"weights\": {\n    \"w_img\": ";
  detail::append_matrix(out, encoder.w_img);
  out += ",\n    \"b_img\": ";
  detail::append_vector(out, encoder.b_img);
  out += ",\n    \"w_txt\": ";
  detail::append_matrix(out, encoder.w_txt);
  out += ",\n    \"b_txt\": ";
  detail::append_vector(out, encoder.b_txt);
  out += "\n  }\n}\n";
  write_file(path, out);
}

ToyDualEncoder load_encoder(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("encoder checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("version", 0) != 1 || j.value("kind", "") != "dual-encoder") {
    throw LoadError("'" + path.string() + "' is not a version-1 dual-encoder checkpoint");
  }
  ToyDualEncoder enc;
  enc.raw_dim = j.at("raw_dim").get<std::size_t>();
  enc.feat_dim = j.at("feat_dim").get<std::size_t>();
  enc.dim = j.at("dim").get<std::size_t>();
  enc.tau = j.at("tau").get<double>();
  if (enc.raw_dim == 0 || enc.feat_dim == 0 || enc.dim == 0 || !(enc.tau > 0.0)) {
    throw LoadError("encoder checkpoint has invalid dimensions or tau");
  }
  const auto& w = j.at("weights");
  enc.w_img = detail::matrix_from_json(w.at("w_img"), enc.raw_dim, enc.dim, "w_img");
  enc.b_img = detail::vector_from_json(w.at("b_img"), enc.dim, "b_img");
  enc.w_txt = detail::matrix_from_json(w.at("w_txt"), enc.feat_dim, enc.dim, "w_txt");
  enc.b_txt = detail::vector_from_json(w.at("b_txt"), enc.dim, "b_txt");
  return enc;
}

// --- synthetic pairs ------------------------------------------------------------------

PairDataset generate_synthetic_pairs(const SyntheticPairSpec& spec) {
  if (spec.n_classes < 2) throw DomainError("generate_synthetic_pairs: n_classes must be >= 2");
  if (spec.n_train_per_class < 1) throw DomainError("generate_synthetic_pairs: n_train_per_class must be >= 1");
  if (spec.n_eval_per_class < 0) throw DomainError("generate_synthetic_pairs: n_eval_per_class must be >= 0");
  if (spec.dim < 2 || spec.dim < spec.n_classes) {
    throw DomainError("generate_synthetic_pairs: dim must be >= max(2, n_classes)");
  }
  if (!(spec.noise_sigma > 0.0)) throw DomainError("generate_synthetic_pairs: noise_sigma must be > 0");
  if (spec.modality_sigma < 0.0) throw DomainError("generate_synthetic_pairs: modality_sigma must be >= 0");

  const std::size_t dim = static_cast<std::size_t>(spec.dim);
  RngStream rng(spec.seed);

  auto fill_split = [&](int per_class, PairBatch& batch, std::vector<int>& labels) {
    const std::size_t total = static_cast<std::size_t>(spec.n_classes) * static_cast<std::size_t>(per_class);
    batch.image_features = Matrix(total, dim);
    batch.text_features = Matrix(total, dim);
    labels.clear();
    labels.reserve(total);
    std::size_t row = 0;
    for (int c = 0; c < spec.n_classes; ++c) {
      for (int p = 0; p < per_class; ++p, ++row) {
        for (std::size_t i = 0; i < dim; ++i) {
          double mean_i = (i == static_cast<std::size_t>(c)) ? spec.cluster_separation * spec.noise_sigma : 0.0;
          double latent = mean_i + rng.normal(0.0, spec.noise_sigma);
          batch.image_features(row, i) = latent + rng.normal(0.0, spec.modality_sigma);
          batch.text_features(row, i) = latent + rng.normal(0.0, spec.modality_sigma);
        }
        labels.push_back(c);
      }
    }
  };

  PairDataset ds;
  fill_split(spec.n_train_per_class, ds.train, ds.train_labels);
  fill_split(spec.n_eval_per_class, ds.eval, ds.eval_labels);
  return ds;
}

double matched_text_retrieval_accuracy(const ToyDualEncoder& encoder, const PairBatch& eval) {
  const std::size_t n = eval.image_features.rows();
  if (n == 0) throw ShapeError("matched_text_retrieval_accuracy: empty eval set");
  std::vector<Vector> imgs, txts;
  imgs.reserve(n);
  txts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector raw(encoder.raw_dim), feat(encoder.feat_dim);
    for (std::size_t c = 0; c < encoder.raw_dim; ++c) raw[c] = eval.image_features(i, c);
    for (std::size_t c = 0; c < encoder.feat_dim; ++c) feat[c] = eval.text_features(i, c);
    imgs.push_back(encoder.embed_image(raw));
    txts.push_back(encoder.embed_text(feat));
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_sim = dot(imgs[i], txts[0]);
    for (std::size_t j = 1; j < n; ++j) {
      double sim = dot(imgs[i], txts[j]);
      if (sim > best_sim) {
        best_sim = sim;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace remember
