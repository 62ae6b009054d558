#include "pacl/model.hpp"

#include <cmath>

#include "pacl/util.hpp"

namespace pacl {

namespace {

Eigen::MatrixXd normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, stddev);
  }
  return m;
}

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  const double keep_scale = 1.0 / (1.0 - rate);
  Eigen::MatrixXd mask(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      mask(r, c) = rng.uniform() < rate ? 0.0 : keep_scale;
    }
  }
  return mask;
}

constexpr double kInitStd = 0.02;

}  // namespace

TransformerEncoder::TransformerEncoder(BuiltinEncoderConfig config, Rng& init_rng)
    : config_(config) {
  if (config_.ffn_hidden == 0) config_.ffn_hidden = 4 * config_.d_model;
  if (config_.d_model % config_.n_heads != 0)
    throw ShapeMismatch("d_model must be divisible by n_heads");
  const int d = config_.d_model;
  const int f = config_.ffn_hidden;

  token_embedding = Param("encoder.token_embedding",
                          normal_init(config_.vocab_size, d, kInitStd, init_rng));
  position_embedding = Param("encoder.position_embedding",
                             normal_init(config_.max_sequence_length + 1, d, kInitStd, init_rng));
  layers_.resize(static_cast<std::size_t>(config_.n_layers));
  for (int l = 0; l < config_.n_layers; ++l) {
    Layer& layer = layers_[static_cast<std::size_t>(l)];
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    layer.ln1_gamma = Param(p + "ln1_gamma", Eigen::MatrixXd::Ones(1, d));
    layer.ln1_beta = Param(p + "ln1_beta", Eigen::MatrixXd::Zero(1, d));
    layer.wq = Param(p + "wq", normal_init(d, d, kInitStd, init_rng));
    layer.bq = Param(p + "bq", Eigen::MatrixXd::Zero(1, d));
    layer.wk = Param(p + "wk", normal_init(d, d, kInitStd, init_rng));
    layer.bk = Param(p + "bk", Eigen::MatrixXd::Zero(1, d));
    layer.wv = Param(p + "wv", normal_init(d, d, kInitStd, init_rng));
    layer.bv = Param(p + "bv", Eigen::MatrixXd::Zero(1, d));
    layer.wo = Param(p + "wo", normal_init(d, d, kInitStd, init_rng));
    layer.bo = Param(p + "bo", Eigen::MatrixXd::Zero(1, d));
    layer.ln2_gamma = Param(p + "ln2_gamma", Eigen::MatrixXd::Ones(1, d));
    layer.ln2_beta = Param(p + "ln2_beta", Eigen::MatrixXd::Zero(1, d));
    layer.w1 = Param(p + "w1", normal_init(d, f, kInitStd, init_rng));
    layer.b1 = Param(p + "b1", Eigen::MatrixXd::Zero(1, f));
    layer.w2 = Param(p + "w2", normal_init(f, d, kInitStd, init_rng));
    layer.b2 = Param(p + "b2", Eigen::MatrixXd::Zero(1, d));
  }
  final_gamma = Param("encoder.final_gamma", Eigen::MatrixXd::Ones(1, d));
  final_beta = Param("encoder.final_beta", Eigen::MatrixXd::Zero(1, d));
}

EncoderOutput TransformerEncoder::encode(ad::Tape& tape, const std::vector<int>& token_ids,
                                         bool training, Rng& dropout_rng) {
  const int n = static_cast<int>(token_ids.size());
  if (n < 1) throw ShapeMismatch("encode: empty token sequence");
  if (n > config_.max_sequence_length)
    throw SequenceTooLong("sequence of " + std::to_string(n) + " tokens exceeds limit " +
                          std::to_string(config_.max_sequence_length));

  const int cls_id = config_.vocab_size - 1;
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(n) + 1);
  ids.push_back(cls_id);
  ids.insert(ids.end(), token_ids.begin(), token_ids.end());

  std::vector<int> positions(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) positions[static_cast<std::size_t>(i)] = i;

  const bool use_dropout = training && config_.dropout > 0.0;
  const int d = config_.d_model;
  const int dh = d / config_.n_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  ad::Value x = tape.add(tape.gather_rows(tape.param(token_embedding), ids),
                         tape.gather_rows(tape.param(position_embedding), positions));
  if (use_dropout) {
    x = tape.mul_constant(x, dropout_mask(n + 1, d, config_.dropout, dropout_rng));
  }

  for (Layer& layer : layers_) {
    ad::Value a = tape.layer_norm_rows(x, tape.param(layer.ln1_gamma), tape.param(layer.ln1_beta));
    ad::Value q = tape.add_row_broadcast(tape.matmul(a, tape.param(layer.wq)), tape.param(layer.bq));
    ad::Value k = tape.add_row_broadcast(tape.matmul(a, tape.param(layer.wk)), tape.param(layer.bk));
    ad::Value v = tape.add_row_broadcast(tape.matmul(a, tape.param(layer.wv)), tape.param(layer.bv));

    std::vector<ad::Value> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(config_.n_heads));
    for (int h = 0; h < config_.n_heads; ++h) {
      ad::Value qh = tape.col_range(q, h * dh, dh);
      ad::Value kh = tape.col_range(k, h * dh, dh);
      ad::Value vh = tape.col_range(v, h * dh, dh);
      ad::Value scores = tape.scale(tape.matmul_bt(qh, kh), inv_sqrt_dh);
      ad::Value probs = tape.softmax_rows(scores);
      head_outputs.push_back(tape.matmul(probs, vh));
    }
    ad::Value context = tape.concat_cols(head_outputs);
    ad::Value attn_out = tape.add_row_broadcast(tape.matmul(context, tape.param(layer.wo)),
                                                tape.param(layer.bo));
    if (use_dropout) {
      attn_out = tape.mul_constant(attn_out, dropout_mask(n + 1, d, config_.dropout, dropout_rng));
    }
    x = tape.add(x, attn_out);

    ad::Value b = tape.layer_norm_rows(x, tape.param(layer.ln2_gamma), tape.param(layer.ln2_beta));
    ad::Value hidden = tape.relu(
        tape.add_row_broadcast(tape.matmul(b, tape.param(layer.w1)), tape.param(layer.b1)));
    ad::Value ffn_out = tape.add_row_broadcast(tape.matmul(hidden, tape.param(layer.w2)),
                                               tape.param(layer.b2));
    if (use_dropout) {
      ffn_out = tape.mul_constant(ffn_out, dropout_mask(n + 1, d, config_.dropout, dropout_rng));
    }
    x = tape.add(x, ffn_out);
  }

  x = tape.layer_norm_rows(x, tape.param(final_gamma), tape.param(final_beta));
  EncoderOutput out;
  out.h_cls = tape.row_range(x, 0, 1);
  out.h_slot = tape.row_range(x, 1, n);
  return out;
}

void TransformerEncoder::collect_params(std::vector<Param*>& out) {
  out.push_back(&token_embedding);
  out.push_back(&position_embedding);
  for (Layer& layer : layers_) {
    for (Param* p : {&layer.ln1_gamma, &layer.ln1_beta, &layer.wq, &layer.bq, &layer.wk,
                     &layer.bk, &layer.wv, &layer.bv, &layer.wo, &layer.bo, &layer.ln2_gamma,
                     &layer.ln2_beta, &layer.w1, &layer.b1, &layer.w2, &layer.b2}) {
      out.push_back(p);
    }
  }
  out.push_back(&final_gamma);
  out.push_back(&final_beta);
}

ad::Value intent_logits(ad::Tape& tape, ad::Value h, ClassifierHead& head) {
  if (h.cols() != head.weight.value.rows()) throw ShapeMismatch("intent_logits: dim mismatch");
  return tape.add_row_broadcast(tape.matmul(h, tape.param(head.weight)), tape.param(head.bias));
}

ad::Value slot_logits(ad::Tape& tape, ad::Value h_slot, ClassifierHead& head) {
  if (h_slot.cols() != head.weight.value.rows()) throw ShapeMismatch("slot_logits: dim mismatch");
  return tape.add_row_broadcast(tape.matmul(h_slot, tape.param(head.weight)),
                                tape.param(head.bias));
}

Eigen::RowVectorXd intent_probabilities(const Eigen::RowVectorXd& logits) {
  Eigen::RowVectorXd p(logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double z = logits(j);
    p(j) = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return p;
}

FusionParams::FusionParams(int n_heads, int d, Rng& init_rng) : heads(n_heads) {
  weight = Param("fusion.weight", normal_init(2 * d, d, kInitStd, init_rng));
  bias = Param("fusion.bias", Eigen::MatrixXd::Zero(1, d));
}

FusionResult fuse_intent_slot(ad::Tape& tape, ad::Value h_cls, ad::Value h_slot, ad::Value weight,
                              ad::Value bias, int heads) {
  const Eigen::Index d = h_cls.cols();
  if (h_cls.rows() != 1) throw ShapeMismatch("fuse: h_cls must be a row vector");
  if (h_slot.cols() != d) throw ShapeMismatch("fuse: h_slot dim mismatch");
  if (heads < 1 || d % heads != 0) throw ShapeMismatch("fuse: d must be divisible by heads");
  if (weight.rows() != 2 * d || weight.cols() != d) throw ShapeMismatch("fuse: weight shape");
  if (bias.rows() != 1 || bias.cols() != d) throw ShapeMismatch("fuse: bias shape");

  const Eigen::Index dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  FusionResult result;
  std::vector<ad::Value> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    ad::Value q = tape.col_range(h_cls, h * dh, dh);
    ad::Value kv = tape.col_range(h_slot, h * dh, dh);
    ad::Value scores = tape.scale(tape.matmul_bt(q, kv), inv_sqrt_dh);
    ad::Value probs = tape.softmax_rows(scores);
    result.attention.push_back(probs.val().row(0));
    head_outputs.push_back(tape.matmul(probs, kv));
  }
  result.h_intent = tape.concat_cols(head_outputs);
  ad::Value cat = tape.concat_cols({result.h_intent, h_cls});
  result.h_prime = tape.add_row_broadcast(tape.matmul(cat, weight), bias);
  return result;
}

std::set<int> predict_intents(const Eigen::RowVectorXd& probabilities, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw InputError("intent threshold must be in (0,1)");
  std::set<int> out;
  for (Eigen::Index j = 0; j < probabilities.cols(); ++j) {
    if (probabilities(j) >= threshold) out.insert(static_cast<int>(j));
  }
  return out;
}

NluModel::NluModel(Vocab token_vocab, Vocab intent_vocab, Vocab slot_vocab,
                   std::unique_ptr<Encoder> encoder, int fusion_heads, Rng& init_rng)
    : token_vocab_(std::move(token_vocab)),
      intent_vocab_(std::move(intent_vocab)),
      slot_vocab_(std::move(slot_vocab)),
      encoder_(std::move(encoder)) {
  const int d = encoder_->dim();
  intent_head_.weight =
      Param("intent_head.weight", normal_init(d, intent_vocab_.size(), kInitStd, init_rng));
  intent_head_.bias = Param("intent_head.bias", Eigen::MatrixXd::Zero(1, intent_vocab_.size()));
  slot_head_.weight =
      Param("slot_head.weight", normal_init(d, slot_vocab_.size(), kInitStd, init_rng));
  slot_head_.bias = Param("slot_head.bias", Eigen::MatrixXd::Zero(1, slot_vocab_.size()));
  fusion_ = FusionParams(fusion_heads, d, init_rng);
}

EncoderOutput NluModel::encode(ad::Tape& tape, const std::vector<std::string>& tokens,
                               bool training, Rng& dropout_rng) {
  return encoder_->encode(tape, token_ids(tokens), training, dropout_rng);
}

ad::Value NluModel::intent_head_logits(ad::Tape& tape, ad::Value h_cls) {
  return intent_logits(tape, h_cls, intent_head_);
}

ad::Value NluModel::slot_head_logits(ad::Tape& tape, ad::Value h_slot) {
  return slot_logits(tape, h_slot, slot_head_);
}

FusionResult NluModel::fuse(ad::Tape& tape, const EncoderOutput& enc) {
  return fuse_intent_slot(tape, enc.h_cls, enc.h_slot, tape.param(fusion_.weight),
                          tape.param(fusion_.bias), fusion_.heads);
}

ad::Value NluModel::aux_intent_logits(ad::Tape& tape, const EncoderOutput& enc) {
  // Detached encoder outputs and frozen classifier weights: only the fusion
  // parameters receive gradient from this path.
  FusionResult fused =
      fuse_intent_slot(tape, tape.stop_gradient(enc.h_cls), tape.stop_gradient(enc.h_slot),
                       tape.param(fusion_.weight), tape.param(fusion_.bias), fusion_.heads);
  ad::Value w = tape.constant(intent_head_.weight.value);
  ad::Value b = tape.constant(intent_head_.bias.value);
  return tape.add_row_broadcast(tape.matmul(fused.h_prime, w), b);
}

Eigen::RowVectorXd NluModel::eval_intent_probabilities(const std::vector<std::string>& tokens) {
  ad::Tape tape;
  EncoderOutput enc = encode(tape, tokens, false, eval_rng_);
  ad::Value logits = intent_head_logits(tape, enc.h_cls);
  return intent_probabilities(logits.val().row(0));
}

NluModel::Prediction NluModel::predict(const std::vector<std::string>& tokens,
                                       double intent_threshold) {
  ad::Tape tape;
  EncoderOutput enc = encode(tape, tokens, false, eval_rng_);
  ad::Value ilogits = intent_head_logits(tape, enc.h_cls);
  ad::Value slogits = slot_head_logits(tape, enc.h_slot);

  Prediction pred;
  const Eigen::RowVectorXd probs = intent_probabilities(ilogits.val().row(0));
  for (int id : predict_intents(probs, intent_threshold)) {
    pred.intents.insert(intent_vocab_.name(id));
  }
  for (Eigen::Index r = 0; r < slogits.rows(); ++r) {
    Eigen::Index best = 0;
    slogits.val().row(r).maxCoeff(&best);
    pred.slots.push_back(slot_vocab_.name(static_cast<int>(best)));
  }
  return pred;
}

std::vector<int> NluModel::token_ids(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(token_vocab_.id_or_unk(t));
  return ids;
}

std::vector<Param*> NluModel::parameters() {
  std::vector<Param*> out;
  encoder_->collect_params(out);
  out.push_back(&intent_head_.weight);
  out.push_back(&intent_head_.bias);
  out.push_back(&slot_head_.weight);
  out.push_back(&slot_head_.bias);
  out.push_back(&fusion_.weight);
  out.push_back(&fusion_.bias);
  return out;
}

std::uint64_t NluModel::parameter_checksum() {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (Param* p : parameters()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    const std::size_t size = static_cast<std::size_t>(p->value.size()) * sizeof(double);
    for (std::size_t i = 0; i < size; ++i) {
      h ^= bytes[i];
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

NluModel make_builtin_model(const Corpus& corpus, const BuiltinEncoderConfig& encoder_config,
                            int fusion_heads, std::uint64_t seed) {
  std::set<std::string> token_set;
  for (const auto& u : corpus.train) token_set.insert(u.tokens.begin(), u.tokens.end());
  Vocab token_vocab = Vocab::from_labels(token_set);

  BuiltinEncoderConfig cfg = encoder_config;
  cfg.vocab_size = token_vocab.size() + 2;  // words + [UNK] + [CLS]

  Rng init_rng(seed, rng_stream::kInit);
  auto encoder = std::make_unique<TransformerEncoder>(cfg, init_rng);
  return NluModel(std::move(token_vocab), corpus.intent_vocabulary, corpus.slot_vocabulary,
                  std::move(encoder), fusion_heads, init_rng);
}

}  // namespace pacl
