#include "remember/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "checkpoint_util.hpp"
#include "remember/fsio.hpp"

namespace remember {

namespace {

// [z; sim*z] with z = image | abn | dx | desc, masked modalities zeroed.
Vector build_z8(const ReferenceCase& ref, double sim, const AblationMask& mask, std::size_t d) {
  if (ref.image_embedding.size() != d || ref.abn_embedding.size() != d ||
      ref.dx_embedding.size() != d || ref.desc_embedding.size() != d) {
    throw ShapeError("evidence: case '" + ref.id + "' embedding width does not match model");
  }
  if (!std::isfinite(sim)) throw NumericError("evidence: non-finite retrieval similarity");
  const double s = mask.disable_similarity_weighting ? 1.0 : sim;
  Vector z8(8 * d);
  const Vector* parts[4] = {&ref.image_embedding, &ref.abn_embedding, &ref.dx_embedding,
                            &ref.desc_embedding};
  const bool dropped[4] = {mask.drop_image, mask.drop_abn, mask.drop_dx, mask.drop_desc};
  for (std::size_t p = 0; p < 4; ++p) {
    if (dropped[p]) continue;
    const Vector& src = *parts[p];
    for (std::size_t i = 0; i < d; ++i) {
      z8[p * d + i] = src[i];
      z8[(4 + p) * d + i] = s * src[i];
    }
  }
  return z8;
}

void check_encoder_shapes(const EvidenceEncoderParams& params) {
  const std::size_t d = params.w_proj.cols();
  if (d == 0 || params.w_proj.rows() != d) throw ShapeError("evidence: w_proj must be DxD");
  if (params.w1.rows() != 8 * d || params.w1.cols() != d) {
    throw ShapeError("evidence: w1 must be 8DxD");
  }
  if (params.b1.size() != d) throw ShapeError("evidence: b1 must have length D");
}

// Per-example evidence intermediates kept for the backward pass.
struct RowCache {
  Matrix z8;  // rows x 8D
  Matrix a;   // rows x D, pre-ReLU
  Matrix e;   // rows x D, post-ReLU
  Matrix ep;  // rows x D, projected
};

RowCache build_rows(const std::vector<RetrievalHit>& hits, const Corpus& corpus,
                    const EvidenceEncoderParams& params, const AblationMask& mask) {
  check_encoder_shapes(params);
  const std::size_t d = params.w_proj.cols();
  RowCache rc;
  rc.z8 = Matrix(hits.size(), 8 * d);
  rc.a = Matrix(hits.size(), d);
  rc.e = Matrix(hits.size(), d);
  rc.ep = Matrix(hits.size(), d);
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const ReferenceCase& ref = corpus.by_id(hits[i].case_id);
    Vector z8 = build_z8(ref, hits[i].sim, mask, d);
    for (std::size_t c = 0; c < 8 * d; ++c) rc.z8(i, c) = z8[c];
    for (std::size_t c = 0; c < d; ++c) {
      double acc = params.b1[c];
      for (std::size_t r = 0; r < 8 * d; ++r) acc += z8[r] * params.w1(r, c);
      rc.a(i, c) = acc;
      rc.e(i, c) = acc > 0.0 ? acc : 0.0;
    }
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < d; ++r) acc += rc.e(i, r) * params.w_proj(r, c);
      rc.ep(i, c) = acc;
    }
  }
  return rc;
}

// Head forward intermediates.
struct HeadCache {
  Vector q;       // query projection (attention path only)
  Vector alpha;   // attention weights or uniform fallback
  Vector e_bar;   // pooled evidence (attention path only)
  Vector u;       // MLP input
  Vector h_pre;   // hidden pre-ReLU
  Vector h;       // hidden post-ReLU
  Vector logits;
};

HeadCache head_forward(const Vector& query, const Matrix& ep, const EvidenceModel& model) {
  const std::size_t d = model.dim;
  if (query.size() != d) throw ShapeError("predict: query width does not match model");
  if (ep.rows() > 0 && ep.cols() != d) throw ShapeError("predict: evidence width does not match model");

  HeadCache hc;
  const std::size_t width = model.mlp_input_width();
  if (model.head.mlp_w1.rows() != width) {
    throw ConfigError("predict: head was built for a different evidence layout");
  }
  hc.u = Vector(width);
  for (std::size_t i = 0; i < d; ++i) hc.u[i] = query[i];

  if (model.mask.drop_all_evidence) {
    // Query-only: the evidence slot stays zero. Attention weights are still
    // reported when evidence exists, purely as a diagnostic.
    if (ep.rows() > 0) hc.alpha = attend(query, ep, model.head).alpha;
  } else if (model.mask.disable_attention) {
    if (ep.rows() > model.k) {
      throw ConfigError("predict: more evidence rows than the head's configured k");
    }
    for (std::size_t i = 0; i < ep.rows(); ++i) {
      for (std::size_t c = 0; c < d; ++c) hc.u[d + i * d + c] = ep(i, c);
    }
    if (ep.rows() > 0) hc.alpha = Vector(ep.rows(), 1.0 / static_cast<double>(ep.rows()));
  } else {
    if (ep.rows() == 0) throw DomainError("predict: no evidence rows (attention path)");
    AttendResult at = attend(query, ep, model.head);
    hc.q = vecmat(query, model.head.w_q);
    hc.alpha = at.alpha;
    hc.e_bar = at.e_bar;
    for (std::size_t i = 0; i < d; ++i) hc.u[d + i] = hc.e_bar[i];
  }

  const std::size_t hidden = model.head.mlp_b1.size();
  hc.h_pre = Vector(hidden);
  hc.h = Vector(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    double acc = model.head.mlp_b1[j];
    for (std::size_t i = 0; i < width; ++i) acc += hc.u[i] * model.head.mlp_w1(i, j);
    hc.h_pre[j] = acc;
    hc.h[j] = acc > 0.0 ? acc : 0.0;
  }
  const std::size_t c_out = model.head.mlp_b2.size();
  hc.logits = Vector(c_out);
  for (std::size_t c = 0; c < c_out; ++c) {
    double acc = model.head.mlp_b2[c];
    for (std::size_t j = 0; j < hidden; ++j) acc += hc.h[j] * model.head.mlp_w2(j, c);
    hc.logits[c] = acc;
  }
  return hc;
}

struct Grads {
  Matrix w1, w_proj, w_q, mlp_w1, mlp_w2;
  Vector b1, mlp_b1, mlp_b2;
};

Grads make_grads(const EvidenceModel& m) {
  Grads g;
  g.w1 = Matrix(m.encoder.w1.rows(), m.encoder.w1.cols());
  g.b1 = Vector(m.encoder.b1.size());
  g.w_proj = Matrix(m.encoder.w_proj.rows(), m.encoder.w_proj.cols());
  g.w_q = Matrix(m.head.w_q.rows(), m.head.w_q.cols());
  g.mlp_w1 = Matrix(m.head.mlp_w1.rows(), m.head.mlp_w1.cols());
  g.mlp_b1 = Vector(m.head.mlp_b1.size());
  g.mlp_w2 = Matrix(m.head.mlp_w2.rows(), m.head.mlp_w2.cols());
  g.mlp_b2 = Vector(m.head.mlp_b2.size());
  return g;
}

void zero(Grads& g) {
  for (auto* m : {&g.w1, &g.w_proj, &g.w_q, &g.mlp_w1, &g.mlp_w2}) {
    std::fill(m->data().begin(), m->data().end(), 0.0);
  }
  for (auto* v : {&g.b1, &g.mlp_b1, &g.mlp_b2}) {
    std::fill(v->data().begin(), v->data().end(), 0.0);
  }
}

// Forward + hand-written backward for one example; gradients scaled by
// `weight` accumulate into `grads`. Returns the unweighted loss.
double accumulate_example(const EvidenceModel& model, const TrainExample& example,
                          const Corpus& corpus, double weight, Grads& grads) {
  const std::size_t d = model.dim;
  RowCache rc = build_rows(example.hits, corpus, model.encoder, model.mask);
  HeadCache hc = head_forward(example.query, rc.ep, model);
  CrossEntropyResult ce = cross_entropy(hc.logits, static_cast<std::size_t>(example.label));

  const std::size_t width = model.mlp_input_width();
  const std::size_t hidden = model.head.mlp_b1.size();
  const std::size_t c_out = model.head.mlp_b2.size();

  Vector g_logits(c_out);
  for (std::size_t c = 0; c < c_out; ++c) g_logits[c] = weight * ce.grad[c];

  // MLP output layer: logits = h * mlp_w2 + mlp_b2
  Vector g_h(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < c_out; ++c) {
      grads.mlp_w2(j, c) += hc.h[j] * g_logits[c];
      acc += model.head.mlp_w2(j, c) * g_logits[c];
    }
    g_h[j] = hc.h_pre[j] > 0.0 ? acc : 0.0;  // fused ReLU backward
  }
  for (std::size_t c = 0; c < c_out; ++c) grads.mlp_b2[c] += g_logits[c];

  // MLP hidden layer: h_pre = u * mlp_w1 + mlp_b1
  Vector g_u(width);
  for (std::size_t i = 0; i < width; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < hidden; ++j) {
      grads.mlp_w1(i, j) += hc.u[i] * g_h[j];
      acc += model.head.mlp_w1(i, j) * g_h[j];
    }
    g_u[i] = acc;
  }
  for (std::size_t j = 0; j < hidden; ++j) grads.mlp_b1[j] += g_h[j];

  const std::size_t rows = rc.ep.rows();
  Matrix g_ep(rows, d);

  if (model.mask.drop_all_evidence) {
    return ce.loss;  // nothing upstream of the query slot carries gradient
  }
  if (model.mask.disable_attention) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t c = 0; c < d; ++c) g_ep(i, c) = g_u[d + i * d + c];
    }
  } else {
    // e_bar = sum_i alpha_i ep_i; alpha = softmax(ep q); q = query W_q
    std::span<const double> g_ebar(g_u.data().subspan(d, d));
    Vector g_alpha(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        acc += rc.ep(i, c) * g_ebar[c];
        g_ep(i, c) = hc.alpha[i] * g_ebar[c];
      }
      g_alpha[i] = acc;
    }
    double alpha_dot = 0.0;
    for (std::size_t i = 0; i < rows; ++i) alpha_dot += hc.alpha[i] * g_alpha[i];
    Vector g_q(d);
    for (std::size_t i = 0; i < rows; ++i) {
      double g_score = hc.alpha[i] * (g_alpha[i] - alpha_dot);
      for (std::size_t c = 0; c < d; ++c) {
        g_ep(i, c) += g_score * hc.q[c];
        g_q[c] += g_score * rc.ep(i, c);
      }
    }
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) grads.w_q(r, c) += example.query[r] * g_q[c];
    }
  }

  // Evidence rows: ep = relu(z8 w1 + b1) w_proj
  for (std::size_t i = 0; i < rows; ++i) {
    Vector g_e(d);
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        grads.w_proj(r, c) += rc.e(i, r) * g_ep(i, c);
        acc += model.encoder.w_proj(r, c) * g_ep(i, c);
      }
      g_e[r] = rc.a(i, r) > 0.0 ? acc : 0.0;
    }
    for (std::size_t r = 0; r < 8 * d; ++r) {
      const double z = rc.z8(i, r);
      if (z == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) grads.w1(r, c) += z * g_e[c];
    }
    for (std::size_t c = 0; c < d; ++c) grads.b1[c] += g_e[c];
  }
  return ce.loss;
}

}  // namespace

std::size_t EvidenceModel::mlp_input_width() const {
  if (mask.drop_all_evidence) return 2 * dim;
  if (mask.disable_attention) return dim + k * dim;
  return 2 * dim;
}

EvidenceModel make_model(std::size_t dim, std::size_t k, int n_classes, int hidden,
                         Task task, const AblationMask& mask, RngStream& rng) {
  if (dim == 0) throw DomainError("make_model: dim must be >= 1");
  if (k == 0) throw DomainError("make_model: k must be >= 1");
  if (n_classes < 2) throw DomainError("make_model: need at least 2 classes");
  if (hidden < 1) throw DomainError("make_model: hidden width must be >= 1");
  EvidenceModel m;
  m.dim = dim;
  m.k = k;
  m.n_classes = n_classes;
  m.hidden = hidden;
  m.task = task;
  m.mask = mask;
  m.encoder.w1 = kaiming_uniform(8 * dim, 8 * dim, dim, rng);
  m.encoder.b1 = Vector(dim);
  m.encoder.w_proj = kaiming_uniform(dim, dim, dim, rng);
  m.head.w_q = kaiming_uniform(dim, dim, dim, rng);
  const std::size_t width = m.mlp_input_width();
  m.head.mlp_w1 = kaiming_uniform(width, width, static_cast<std::size_t>(hidden), rng);
  m.head.mlp_b1 = Vector(static_cast<std::size_t>(hidden));
  m.head.mlp_w2 = kaiming_uniform(static_cast<std::size_t>(hidden),
                                  static_cast<std::size_t>(hidden),
                                  static_cast<std::size_t>(n_classes), rng);
  m.head.mlp_b2 = Vector(static_cast<std::size_t>(n_classes));
  return m;
}

Vector build_evidence_vector(const ReferenceCase& ref, double sim,
                             const EvidenceEncoderParams& params, const AblationMask& mask) {
  check_encoder_shapes(params);
  const std::size_t d = params.w_proj.cols();
  Vector z8 = build_z8(ref, sim, mask, d);
  Vector e(d);
  for (std::size_t c = 0; c < d; ++c) {
    double acc = params.b1[c];
    for (std::size_t r = 0; r < 8 * d; ++r) acc += z8[r] * params.w1(r, c);
    e[c] = acc > 0.0 ? acc : 0.0;
  }
  Vector out(d);
  for (std::size_t c = 0; c < d; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < d; ++r) acc += e[r] * params.w_proj(r, c);
    out[c] = acc;
  }
  return out;
}

Matrix build_evidence_matrix(const std::vector<RetrievalHit>& hits, const Corpus& corpus,
                             const EvidenceEncoderParams& params, const AblationMask& mask) {
  RowCache rc = build_rows(hits, corpus, params, mask);
  return std::move(rc.ep);
}

AttendResult attend(const Vector& query, const Matrix& evidence, const InferenceHeadParams& params) {
  if (evidence.rows() == 0) throw DomainError("attend: evidence matrix is empty");
  const std::size_t d = query.size();
  if (evidence.cols() != d) throw ShapeError("attend: query/evidence width mismatch");
  if (params.w_q.rows() != d || params.w_q.cols() != d) {
    throw ShapeError("attend: w_q must be DxD");
  }
  Vector q = vecmat(query, params.w_q);
  Vector scores(evidence.rows());
  for (std::size_t i = 0; i < evidence.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += evidence(i, c) * q[c];
    scores[i] = acc;
  }
  AttendResult out;
  out.alpha = softmax(scores);
  out.e_bar = Vector(d);
  for (std::size_t i = 0; i < evidence.rows(); ++i) {
    for (std::size_t c = 0; c < d; ++c) out.e_bar[c] += out.alpha[i] * evidence(i, c);
  }
  return out;
}

PredictResult predict(const Vector& query, const Matrix& evidence, const EvidenceModel& model) {
  HeadCache hc = head_forward(query, evidence, model);
  PredictResult out;
  out.logits = std::move(hc.logits);
  out.probs = softmax(out.logits);
  out.alpha = std::move(hc.alpha);
  return out;
}

PredictResult predict_example(const EvidenceModel& model, const TrainExample& example,
                              const Corpus& corpus) {
  Matrix e = build_evidence_matrix(example.hits, corpus, model.encoder, model.mask);
  return predict(example.query, e, model);
}

double evaluate_loss(const EvidenceModel& model, const std::vector<TrainExample>& examples,
                     const Corpus& corpus) {
  if (examples.empty()) throw DomainError("evaluate_loss: empty example set");
  double total = 0.0;
  for (const TrainExample& ex : examples) {
    PredictResult pr = predict_example(model, ex, corpus);
    total += cross_entropy(pr.logits, static_cast<std::size_t>(ex.label)).loss;
  }
  return total / static_cast<double>(examples.size());
}

HeadLossResult head_loss(const EvidenceModel& model, const std::vector<TrainExample>& examples,
                         const Corpus& corpus) {
  if (examples.empty()) throw DomainError("head_loss: empty example set");
  Grads acc = make_grads(model);
  const double weight = 1.0 / static_cast<double>(examples.size());
  double loss = 0.0;
  for (const TrainExample& ex : examples) {
    loss += accumulate_example(model, ex, corpus, weight, acc);
  }
  HeadLossResult out;
  out.loss = loss * weight;
  out.grads.w1 = std::move(acc.w1);
  out.grads.b1 = std::move(acc.b1);
  out.grads.w_proj = std::move(acc.w_proj);
  out.grads.w_q = std::move(acc.w_q);
  out.grads.mlp_w1 = std::move(acc.mlp_w1);
  out.grads.mlp_b1 = std::move(acc.mlp_b1);
  out.grads.mlp_w2 = std::move(acc.mlp_w2);
  out.grads.mlp_b2 = std::move(acc.mlp_b2);
  return out;
}

HeadTrainHistory train_head(EvidenceModel& model, const std::vector<TrainExample>& train,
                            const std::vector<TrainExample>& val, const Corpus& corpus,
                            const HeadTrainConfig& config) {
  if (train.empty() || val.empty()) throw DomainError("train_head: train and val must be non-empty");
  if (config.batch_size < 1) throw ConfigError("train_head: batch_size must be >= 1");
  if (config.max_epochs < 1) throw ConfigError("train_head: max_epochs must be >= 1");
  if (config.patience < 1) throw ConfigError("train_head: patience must be >= 1");
  if (config.lr < 0.0) throw ConfigError("train_head: lr must be >= 0");
  if (config.min_delta < 0.0) throw ConfigError("train_head: min_delta must be >= 0");
  for (const auto* set : {&train, &val}) {
    for (const TrainExample& ex : *set) {
      if (ex.label < 0 || ex.label >= model.n_classes) {
        throw DomainError("train_head: label outside the model's class range");
      }
      if (ex.query.size() != model.dim) throw ShapeError("train_head: query width mismatch");
    }
  }

  HeadTrainHistory history;
  bool single_class = true;
  for (const TrainExample& ex : train) {
    if (ex.label != train.front().label) {
      single_class = false;
      break;
    }
  }
  if (single_class) {
    history.warnings.push_back("training set contains a single class; training anyway");
  }

  AdamConfig adam{config.lr, 0.9, 0.999, 1e-8};
  AdamState st_w1(model.encoder.w1.data().size(), adam);
  AdamState st_b1(model.encoder.b1.size(), adam);
  AdamState st_wp(model.encoder.w_proj.data().size(), adam);
  AdamState st_wq(model.head.w_q.data().size(), adam);
  AdamState st_m1(model.head.mlp_w1.data().size(), adam);
  AdamState st_mb1(model.head.mlp_b1.size(), adam);
  AdamState st_m2(model.head.mlp_w2.data().size(), adam);
  AdamState st_mb2(model.head.mlp_b2.size(), adam);

  Grads grads = make_grads(model);
  RngStream rng(config.seed);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  EvidenceEncoderParams best_encoder = model.encoder;
  InferenceHeadParams best_head = model.head;
  double best_val = std::numeric_limits<double>::infinity();      // strict, for checkpointing
  double patience_ref = std::numeric_limits<double>::infinity();  // needs min_delta to move
  int bad_streak = 0;

  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train.size(); start += bs) {
      const std::size_t count = std::min(bs, train.size() - start);
      zero(grads);
      const double weight = 1.0 / static_cast<double>(count);
      for (std::size_t r = 0; r < count; ++r) {
        loss_sum += accumulate_example(model, train[order[start + r]], corpus, weight, grads);
      }
      adam_step(model.encoder.w1.data(), grads.w1.data(), st_w1);
      adam_step(model.encoder.b1.data(), grads.b1.data(), st_b1);
      adam_step(model.encoder.w_proj.data(), grads.w_proj.data(), st_wp);
      adam_step(model.head.w_q.data(), grads.w_q.data(), st_wq);
      adam_step(model.head.mlp_w1.data(), grads.mlp_w1.data(), st_m1);
      adam_step(model.head.mlp_b1.data(), grads.mlp_b1.data(), st_mb1);
      adam_step(model.head.mlp_w2.data(), grads.mlp_w2.data(), st_m2);
      adam_step(model.head.mlp_b2.data(), grads.mlp_b2.data(), st_mb2);
    }
    history.train_loss.push_back(loss_sum / static_cast<double>(train.size()));

    const double val_loss = evaluate_loss(model, val, corpus);
    history.val_loss.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      history.best_epoch = epoch;
      best_encoder = model.encoder;
      best_head = model.head;
    }
    if (val_loss < patience_ref - config.min_delta) {
      patience_ref = val_loss;
      bad_streak = 0;
    } else {
      ++bad_streak;
      if (bad_streak >= config.patience) {
        history.stopped_early = true;
        break;
      }
    }
  }

  model.encoder = std::move(best_encoder);
  model.head = std::move(best_head);
  return history;
}

// --- checkpoints ------------------------------------------------------------------

void save_model(const EvidenceModel& model, const std::filesystem::path& path) {
  std::string out;
  out += "{\n";
  out += "  \"version\": 1,\n";
  out += "  \"kind\": \"evidence-model\",\n";
  out += "  \"dim\": " + std::to_string(model.dim) + ",\n";
  out += "  \"k\": " + std::to_string(model.k) + ",\n";
  out += "  \"n_classes\": " + std::to_string(model.n_classes) + ",\n";
  out += "  \"hidden\": " + std::to_string(model.hidden) + ",\n";
  out += "  \"task\": \"" + std::string(to_string(model.task)) + "\",\n";
  out += "  \"ablation_mask\": {\n";
  auto flag = [&](const char* name, bool value, bool last) {
    out += std::string("    \"") + name + "\": " + (value ? "true" : "false") + (last ? "\n" : ",\n");
  };
  flag("drop_image", model.mask.drop_image, false);
  flag("drop_abn", model.mask.drop_abn, false);
  flag("drop_dx", model.mask.drop_dx, false);
  flag("drop_desc", model.mask.drop_desc, false);
  flag("disable_similarity_weighting", model.mask.disable_similarity_weighting, false);
  flag("disable_attention", model.mask.disable_attention, false);
  flag("drop_all_evidence", model.mask.drop_all_evidence, true);
  out += "  },\n";
  out += "  \"weights\": {\n    \"w1\": ";
  detail::append_matrix(out, model.encoder.w1);
  out += ",\n    \"b1\": ";
  detail::append_vector(out, model.encoder.b1);
  out += ",\n    \"w_proj\": ";
  detail::append_matrix(out, model.encoder.w_proj);
  out += ",\n    \"w_q\": ";
  detail::append_matrix(out, model.head.w_q);
  out += ",\n    \"mlp_w1\": ";
  detail::append_matrix(out, model.head.mlp_w1);
  out += ",\n    \"mlp_b1\": ";
  detail::append_vector(out, model.head.mlp_b1);
  out += ",\n    \"mlp_w2\": ";
  detail::append_matrix(out, model.head.mlp_w2);
  out += ",\n    \"mlp_b2\": ";
  detail::append_vector(out, model.head.mlp_b2);
  out += "\n  }\n}\n";
  write_file(path, out);
}

EvidenceModel load_model(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("model checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("version", 0) != 1 || j.value("kind", "") != "evidence-model") {
    throw LoadError("'" + path.string() + "' is not a version-1 evidence-model checkpoint");
  }
  EvidenceModel m;
  try {
    m.dim = j.at("dim").get<std::size_t>();
    m.k = j.at("k").get<std::size_t>();
    m.n_classes = j.at("n_classes").get<int>();
    m.hidden = j.at("hidden").get<int>();
    m.task = task_from_string(j.at("task").get<std::string>());
    const auto& mask = j.at("ablation_mask");
    m.mask.drop_image = mask.at("drop_image").get<bool>();
    m.mask.drop_abn = mask.at("drop_abn").get<bool>();
    m.mask.drop_dx = mask.at("drop_dx").get<bool>();
    m.mask.drop_desc = mask.at("drop_desc").get<bool>();
    m.mask.disable_similarity_weighting = mask.at("disable_similarity_weighting").get<bool>();
    m.mask.disable_attention = mask.at("disable_attention").get<bool>();
    m.mask.drop_all_evidence = mask.at("drop_all_evidence").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("model checkpoint '" + path.string() + "' is missing fields: " + e.what());
  } catch (const DomainError& e) {
    throw LoadError("model checkpoint '" + path.string() + "': " + e.what());
  }
  if (m.dim == 0 || m.k == 0 || m.n_classes < 2 || m.hidden < 1) {
    throw LoadError("model checkpoint has invalid dimensions");
  }
  const auto& w = j.at("weights");
  const std::size_t d = m.dim;
  const std::size_t width = m.mlp_input_width();
  const std::size_t hidden = static_cast<std::size_t>(m.hidden);
  const std::size_t classes = static_cast<std::size_t>(m.n_classes);
  m.encoder.w1 = detail::matrix_from_json(w.at("w1"), 8 * d, d, "w1");
  m.encoder.b1 = detail::vector_from_json(w.at("b1"), d, "b1");
  m.encoder.w_proj = detail::matrix_from_json(w.at("w_proj"), d, d, "w_proj");
  m.head.w_q = detail::matrix_from_json(w.at("w_q"), d, d, "w_q");
  m.head.mlp_w1 = detail::matrix_from_json(w.at("mlp_w1"), width, hidden, "mlp_w1");
  m.head.mlp_b1 = detail::vector_from_json(w.at("mlp_b1"), hidden, "mlp_b1");
  m.head.mlp_w2 = detail::matrix_from_json(w.at("mlp_w2"), hidden, classes, "mlp_w2");
  m.head.mlp_b2 = detail::vector_from_json(w.at("mlp_b2"), classes, "mlp_b2");
  return m;
}

}  // namespace remember
