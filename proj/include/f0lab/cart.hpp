#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "f0lab/contour.hpp"
#include "f0lab/corpus.hpp"

namespace f0lab::cart {

// Split question: categorical equality or numeric <= threshold. The yes
// branch takes samples satisfying the test; unknown categorical values go
// to the no branch.
struct Question {
  int feature = -1;  // schema index
  bool is_categorical = false;
  int category = -1;
  double threshold = 0.0;

  bool operator==(const Question&) const = default;
};

struct TreeNode {
  Question question;           // valid when yes >= 0
  int yes = -1;                // child node ids; -1 marks a leaf
  int no = -1;
  std::vector<double> mean;    // leaf target mean, full dimension
  long long count = 0;         // training samples at the leaf

  bool is_leaf() const { return yes < 0; }
};

// Vector-output regression tree, nodes in preorder with the root at 0.
struct RegressionTree {
  int target_dim = 0;
  std::vector<TreeNode> nodes;
};

struct TreeConfig {
  int min_leaf = 10;
  int max_depth = 0;  // 0 = unbounded
  // Empty masks mean "all active". Feature indices refer to the schema;
  // output indices refer to target dimensions and restrict the impurity
  // computation only (leaf means always keep every dimension).
  std::vector<int> active_features;
  std::vector<int> active_outputs;
};

// One training sample: a borrowed feature row plus its target vector.
struct Sample {
  const std::vector<corpus::FeatureValue>* features = nullptr;
  std::vector<double> target;
};

enum class ArchKind { sindt, tonedt, pslevel, scalardt };

const char* arch_name(ArchKind kind);
ArchKind arch_from_name(const std::string& name);

struct ArchitectureSpec {
  ArchKind kind = ArchKind::sindt;
  contour::RepresentationSpec representation;

  void validate() const;
  bool operator==(const ArchitectureSpec&) const = default;
};

inline constexpr int kPhraseDctCoeffs = 3;

// Trained model: trees keyed by role. Keys are "main" (SinDT), "tone<k>"
// plus "pooled" (ToneDT), "phrase" plus "syl" (PSLevel) and "dim<i>"
// (ScalarDT); ShapeMS architectures split each role into "<role>:shape"
// and "<role>:meanstd".
struct DTModel {
  ArchitectureSpec spec;
  corpus::FeatureSchema schema;
  std::vector<int> tone_inventory;
  std::map<std::string, RegressionTree> trees;
};

struct ForestConfig {
  int n_trees = 20;
  double feature_ignore_fraction = 0.3;
  double output_ignore_fraction = 0.3;
  std::uint64_t seed = 1;
  TreeConfig tree;
};

struct MemberMasks {
  std::vector<int> hidden_features;  // schema indices
  std::vector<int> hidden_outputs;   // base representation dimensions
};

struct ForestModel {
  ArchitectureSpec spec;
  corpus::FeatureSchema schema;
  std::vector<int> tone_inventory;
  std::uint64_t seed = 0;
  std::vector<MemberMasks> masks;
  std::vector<DTModel> members;
};

// Exhaustive search over legal questions for the split minimizing the
// children's total squared error around their means, over the active
// output dimensions. Ties go to the earliest feature in schema order, then
// to the lowest category code or threshold. Returns nothing when no legal
// split strictly reduces the impurity.
std::optional<Question> best_split(const corpus::FeatureSchema& schema,
                                   const std::vector<Sample>& samples,
                                   const TreeConfig& config);

RegressionTree train_tree(const corpus::FeatureSchema& schema,
                          const std::vector<Sample>& samples,
                          const TreeConfig& config);

const std::vector<double>& predict_tree(
    const RegressionTree& tree,
    const std::vector<corpus::FeatureValue>& features);

DTModel train_dt_model(const ArchitectureSpec& arch,
                       const corpus::Corpus& train, const TreeConfig& config);

std::vector<corpus::Contour> predict_dt_model(
    const DTModel& model, const corpus::UtteranceRecord& utt);

ForestModel train_forest(const ArchitectureSpec& arch,
                         const corpus::Corpus& train,
                         const ForestConfig& config);

std::vector<corpus::Contour> predict_forest(
    const ForestModel& forest, const corpus::UtteranceRecord& utt);

// F0LAB-DT v1 text formats for single models and forests.
void save_dt_model(const DTModel& model, const std::string& path);
DTModel load_dt_model(const std::string& path);
void save_forest(const ForestModel& forest, const std::string& path);
ForestModel load_forest(const std::string& path);

// Peeks at a model file and reports whether it holds a forest.
bool model_file_is_forest(const std::string& path);

}  // namespace f0lab::cart
