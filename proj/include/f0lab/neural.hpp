#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "f0lab/contour.hpp"
#include "f0lab/corpus.hpp"

namespace f0lab::neural {

using corpus::Contour;
using Vec = std::vector<double>;

struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> v;  // row-major

  void init(int r, int c) {
    rows = r;
    cols = c;
    v.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0);
  }
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }
  double& at(int r, int c) {
    return v[static_cast<std::size_t>(r) * cols + c];
  }
  double at(int r, int c) const {
    return v[static_cast<std::size_t>(r) * cols + c];
  }
};

enum class Act { relu, tanh, identity };

struct DenseLayer {
  Mat w;
  Vec b;
  Act act = Act::identity;
};

struct LSTMCell {
  int in = 0, hidden = 0;
  Mat wxi, whi;
  Vec bi;
  Mat wxf, whf;
  Vec bf;
  Mat wxo, who;
  Vec bo;
  Mat wxg, whg;
  Vec bg;
};

struct BLSTM {
  LSTMCell fwd, bwd;
};

enum class NetKind { mlp, lstm, blstm, additive };

const char* net_name(NetKind kind);
NetKind net_from_name(const std::string& name);

// Feature encoding shared by every network kind: per-categorical-feature
// embedding tables (last row reserved for unknown values) and frozen
// z-score statistics for numeric features. Sequence 1 carries the phone,
// syllable and phrase level features; sequence 2 carries word and syllable
// level features plus a word-identity embedding.
struct FeatureEncoder {
  int emb_dim = 16;
  std::vector<int> seq1_features;  // schema indices
  std::vector<int> seq2_features;
  std::vector<Mat> tables;         // per schema feature; empty for numeric
  Vec num_mean, num_std;           // per schema feature; 0/1 for categorical
  std::vector<int> word_vocab;     // sorted surface ids seen in training
  Mat word_table;                  // word_vocab.size() + 1 rows

  int seq1_dim() const;
  int seq2_dim() const;
  int word_slot(int surface_id) const;  // vocab index or the unknown slot
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 50;
  double clip_norm = 5.0;
  int patience = 5;
  contour::DeltaKind delta = contour::DeltaKind::none;
  std::uint64_t seed = 1;
  int blstm_hidden = 64;  // per direction
  int mlp_hidden1 = 128;
  int mlp_hidden2 = 64;
  int emb_dim = 16;

  void validate() const;
};

// All four network kinds share one parameter container; which tensors are
// live depends on the kind. Baselines consume the concatenation of both
// feature sequences through net1/mlp1; the additive model runs two
// BLSTM+MLP branches whose outputs add. A fixed x100 output gain maps the
// heads to Hz, which is the exact reparameterization of training on
// 1/100-scaled targets.
struct NeuralModel {
  NetKind kind = NetKind::additive;
  corpus::FeatureSchema schema;
  std::vector<int> tones;
  FeatureEncoder enc;
  BLSTM net1;                      // lstm baseline uses net1.fwd only
  std::vector<DenseLayer> mlp1;    // ReLU, ReLU, linear
  BLSTM net2;
  std::vector<DenseLayer> mlp2;    // Tanh, Tanh, linear
};

inline constexpr double kOutputGain = 100.0;
inline constexpr double kTargetScale = 1.0 / kOutputGain;

struct ParamRef {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
};

// Every trainable tensor, in a fixed order shared by initialization,
// serialization, optimizer state and the gradient container.
std::vector<ParamRef> params(NeuralModel& model);

struct PredictionBundle {
  std::vector<Contour> base;      // Hz
  std::vector<Contour> residual;  // zero for the baselines
  std::vector<Contour> total;
  std::vector<Vec> delta;         // per-syllable block for the chosen kind
};

std::pair<std::vector<Vec>, std::vector<Vec>> encode_features(
    const FeatureEncoder& enc, const corpus::FeatureSchema& schema,
    const corpus::UtteranceRecord& utt);

std::pair<Vec, Vec> lstm_step(const LSTMCell& cell, const Vec& x,
                              const Vec& h_prev, const Vec& c_prev);

std::vector<Vec> blstm_forward(const BLSTM& net, const std::vector<Vec>& seq);

PredictionBundle additive_forward(const NeuralModel& model,
                                  const corpus::UtteranceRecord& utt,
                                  contour::DeltaKind delta);

// Mean over syllables of the squared errors on the concatenated
// [contour, delta] components, normalized by the 10 contour values per
// syllable; the delta terms only add error, so the in-vector scheme upper
// bounds the plain objective and matches it when the deltas agree.
double loss_with_delta(const PredictionBundle& pred,
                       const corpus::UtteranceRecord& truth,
                       contour::DeltaKind delta);

struct GradientSet {
  NeuralModel grads;  // same layout as the model, tensors hold dJ/dtheta
  double objective = 0.0;  // scaled training objective J
  double loss_hz = 0.0;    // loss_with_delta average, J / kTargetScale^2
};

// Exact reverse-mode gradients of the training objective
// J = kTargetScale^2 * mean over utterances of loss_with_delta.
GradientSet compute_gradients(const NeuralModel& model,
                              const std::vector<const corpus::UtteranceRecord*>&
                                  utterances,
                              const TrainConfig& config);

struct EpochStats {
  double train_loss = 0.0;  // mean per-step Hz loss
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;  // 1-based epoch whose parameters were kept
};

NeuralModel make_additive(const corpus::Corpus& train,
                          const TrainConfig& config);
NeuralModel make_baseline(NetKind kind, const corpus::Corpus& train,
                          const TrainConfig& config);

// Adam updates, one utterance per step, utterance order reshuffled each
// epoch from the seed, global-norm gradient clipping, early stop on the
// validation loss with the best parameters restored.
TrainResult train(NeuralModel& model, const corpus::Corpus& train,
                  const corpus::Corpus& val, const TrainConfig& config);

std::vector<Contour> predict_neural(const NeuralModel& model,
                                    const corpus::UtteranceRecord& utt);

// F0LAB-NN v1 text format: structure and shapes first, then each tensor's
// values at 9 significant digits.
void save_neural(const NeuralModel& model, const std::string& path);
NeuralModel load_neural(const std::string& path);

}  // namespace f0lab::neural
