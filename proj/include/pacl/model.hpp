#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "pacl/autodiff.hpp"
#include "pacl/corpus.hpp"
#include "pacl/rng.hpp"

namespace pacl {

struct SequenceTooLong : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sentence representation plus per-token representations, both on the tape.
struct EncoderOutput {
  ad::Value h_cls;   // 1 x d
  ad::Value h_slot;  // n x d
};

// Encoder seam: anything producing (h_cls, H_slot) plugs in here.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual EncoderOutput encode(ad::Tape& tape, const std::vector<int>& token_ids, bool training,
                               Rng& dropout_rng) = 0;
  virtual int dim() const = 0;
  virtual int max_sequence_length() const = 0;
  virtual void collect_params(std::vector<Param*>& out) = 0;
};

struct BuiltinEncoderConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_hidden = 0;  // 0 -> 4 * d_model
  int max_sequence_length = 50;
  double dropout = 0.1;
};

// From-scratch transformer encoder sized for CPU desk-scale runs: learned
// positional embeddings, pre-norm residual blocks, a leading [CLS] position.
class TransformerEncoder : public Encoder {
 public:
  TransformerEncoder(BuiltinEncoderConfig config, Rng& init_rng);

  EncoderOutput encode(ad::Tape& tape, const std::vector<int>& token_ids, bool training,
                       Rng& dropout_rng) override;
  int dim() const override { return config_.d_model; }
  int max_sequence_length() const override { return config_.max_sequence_length; }
  void collect_params(std::vector<Param*>& out) override;

  const BuiltinEncoderConfig& config() const { return config_; }

 private:
  struct Layer {
    Param ln1_gamma, ln1_beta;
    Param wq, bq, wk, bk, wv, bv, wo, bo;
    Param ln2_gamma, ln2_beta;
    Param w1, b1, w2, b2;
  };

  BuiltinEncoderConfig config_;
  Param token_embedding;     // (vocab + 1) x d; row 0 is [CLS]
  Param position_embedding;  // (max_len + 1) x d
  Param final_gamma, final_beta;
  std::vector<Layer> layers_;
};

// Classification heads (independent logistic intents, categorical slots).
struct ClassifierHead {
  Param weight;  // d x out
  Param bias;    // 1 x out
};

ad::Value intent_logits(ad::Tape& tape, ad::Value h, ClassifierHead& head);
ad::Value slot_logits(ad::Tape& tape, ad::Value h_slot, ClassifierHead& head);

// Elementwise logistic probabilities of a logits row (plain numbers).
Eigen::RowVectorXd intent_probabilities(const Eigen::RowVectorXd& logits);

// Intent-slot attention fusion: single-query scaled-dot attention of h_cls
// over the slot rows (heads = contiguous dimension groups, no learned
// projections), followed by an affine map of [h_intent, h_cls].
struct FusionParams {
  int heads = 4;
  Param weight;  // 2d x d
  Param bias;    // 1 x d

  FusionParams() = default;
  FusionParams(int n_heads, int d, Rng& init_rng);
};

struct FusionResult {
  ad::Value h_prime;                           // 1 x d, Eq.-style final representation
  ad::Value h_intent;                          // 1 x d, attention output
  std::vector<Eigen::RowVectorXd> attention;   // per head, 1 x n, softmax weights
};

FusionResult fuse_intent_slot(ad::Tape& tape, ad::Value h_cls, ad::Value h_slot, ad::Value weight,
                              ad::Value bias, int heads);

std::set<int> predict_intents(const Eigen::RowVectorXd& probabilities, double threshold);

// Full joint model: encoder, heads, fusion, vocabularies.
class NluModel {
 public:
  NluModel(Vocab token_vocab, Vocab intent_vocab, Vocab slot_vocab,
           std::unique_ptr<Encoder> encoder, int fusion_heads, std::uint64_t init_seed);

  // Forward pieces (tape-based).
  EncoderOutput encode(ad::Tape& tape, const std::vector<std::string>& tokens, bool training,
                       Rng& dropout_rng);
  ad::Value intent_head_logits(ad::Tape& tape, ad::Value h_cls);
  ad::Value slot_head_logits(ad::Tape& tape, ad::Value h_slot);
  // Fusion on live inputs (gradients flow to encoder and fusion params).
  FusionResult fuse(ad::Tape& tape, const EncoderOutput& enc);
  // Auxiliary path: encoder inputs detached, classifier weights frozen.
  ad::Value aux_intent_logits(ad::Tape& tape, const EncoderOutput& enc);

  // Evaluation-mode conveniences (plain numbers, deterministic).
  Eigen::RowVectorXd eval_intent_probabilities(const std::vector<std::string>& tokens);
  struct Prediction {
    std::set<std::string> intents;
    std::vector<std::string> slots;
  };
  Prediction predict(const std::vector<std::string>& tokens, double intent_threshold);

  std::vector<int> token_ids(const std::vector<std::string>& tokens) const;
  std::vector<Param*> parameters();
  std::uint64_t parameter_checksum();

  const Vocab& token_vocab() const { return token_vocab_; }
  const Vocab& intent_vocab() const { return intent_vocab_; }
  const Vocab& slot_vocab() const { return slot_vocab_; }
  Encoder& encoder() { return *encoder_; }
  ClassifierHead& intent_head() { return intent_head_; }
  ClassifierHead& slot_head() { return slot_head_; }
  FusionParams& fusion() { return fusion_; }

 private:
  Vocab token_vocab_;
  Vocab intent_vocab_;
  Vocab slot_vocab_;
  std::unique_ptr<Encoder> encoder_;
  ClassifierHead intent_head_;
  ClassifierHead slot_head_;
  FusionParams fusion_;
  Rng eval_rng_{0};  // never consumed in eval mode; encode() requires an Rng
};

// Builds the token vocabulary from the train split (reserving [CLS]/[UNK])
// and assembles a model with the built-in encoder.
NluModel make_builtin_model(const Corpus& corpus, const BuiltinEncoderConfig& encoder_config,
                            int fusion_heads, std::uint64_t seed);

}  // namespace pacl
