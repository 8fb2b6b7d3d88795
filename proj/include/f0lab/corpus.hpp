#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "f0lab/error.hpp"

namespace f0lab::textio {
class Reader;
}

namespace f0lab::corpus {

inline constexpr int kContourPoints = 10;
using Contour = std::array<double, kContourPoints>;

enum class FeatureLevel { phone, syllable, word, phrase };

const char* level_name(FeatureLevel level);
FeatureLevel level_from_name(const std::string& name);

struct CategoricalKind {
  std::vector<std::string> values;
  bool operator==(const CategoricalKind&) const = default;
};

struct NumericKind {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const NumericKind&) const = default;
};

struct FeatureDef {
  std::string name;
  FeatureLevel level = FeatureLevel::syllable;
  std::variant<CategoricalKind, NumericKind> kind;

  bool is_categorical() const {
    return std::holds_alternative<CategoricalKind>(kind);
  }
  const CategoricalKind& categorical() const {
    return std::get<CategoricalKind>(kind);
  }
  const NumericKind& numeric() const { return std::get<NumericKind>(kind); }
  bool operator==(const FeatureDef&) const = default;
};

// Ordered feature inventory. The entry order is fixed and serialized; it
// defines the feature encoding order everywhere downstream.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureDef> entries);

  const std::vector<FeatureDef>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const FeatureDef& at(std::size_t i) const { return entries_[i]; }

  // Index of a feature by name, -1 if absent.
  int index_of(const std::string& name) const;

  // Code of a categorical value within feature `fi`'s value set, -1 if the
  // value is not in the set.
  int value_code(std::size_t fi, const std::string& value) const;
  const std::string& value_name(std::size_t fi, int code) const;

  void validate() const;

  bool operator==(const FeatureSchema& other) const {
    return entries_ == other.entries_;
  }

 private:
  std::vector<FeatureDef> entries_;
};

// One feature value: categorical code (index into the schema value set) or
// numeric value, per the schema entry at the same position.
using FeatureValue = std::variant<int, double>;

struct SyllableRecord {
  int tone = 0;
  std::vector<FeatureValue> features;  // schema order
  Contour contour{};
  int word_index = 0;
  int phrase_index = 0;
  bool operator==(const SyllableRecord&) const = default;
};

struct WordEntry {
  int surface_id = 0;
  std::string pos_tag;
  bool operator==(const WordEntry&) const = default;
};

// Phrase span over syllable indices, half-open [start, end).
struct PhraseSpan {
  int start = 0;
  int end = 0;
  bool operator==(const PhraseSpan&) const = default;
};

struct UtteranceRecord {
  std::string id;
  std::vector<SyllableRecord> syllables;
  std::vector<WordEntry> words;
  std::vector<PhraseSpan> phrases;
  bool operator==(const UtteranceRecord&) const = default;
};

struct Corpus {
  FeatureSchema schema;
  std::vector<int> tone_inventory;
  std::vector<UtteranceRecord> utterances;

  std::size_t syllable_count() const;
  void validate() const;
  bool operator==(const Corpus&) const = default;
};

struct IntRange {
  int lo = 1;
  int hi = 1;
  bool operator==(const IntRange&) const = default;
};

struct SynthConfig {
  int n_utterances = 100;
  int tone_count = 4;  // 4 or 6; a neutral tone 0 is always added
  IntRange syllables_per_utterance{8, 24};
  IntRange phrases_per_utterance{1, 4};
  double speaker_mean_hz = 220.0;
  double speaker_range_hz = 60.0;
  double declination_slope = -3.0;  // Hz per syllable within a phrase
  double emphasis_probability = 0.25;
  double noise_std_hz = 3.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Synthetic tone-language generator.
//
// Contour recipe, per syllable at position j within its phrase:
//   f0[i] = speaker_mean_hz
//         + speaker_range_hz * tone_template(tone)[i]
//         + declination_slope * j
//         + residual[i]            (word emphasis bump + per-word bias)
//         + noise_std_hz * N(0,1)
// clamped to (50, 600) Hz. The residual is a deterministic function of the
// word's features: emphasized words add kEmphasisAmplitude * speaker_range *
// emphasis_shape()[i]; every word adds word_bias(surface_id) *
// kWordBiasAmplitude * speaker_range (constant over the word's syllables).
// ---------------------------------------------------------------------------

// Fixed 10-point template for a tone id, unitless in roughly [-1, 1].
Contour tone_template(int tone_count, int tone);

// Raised bump applied to syllables of emphasized words, values in (0, 1].
Contour emphasis_shape();

// Deterministic per-word pitch bias in [-1, 1], derived from the surface id.
double word_bias(int surface_id);

inline constexpr double kEmphasisAmplitude = 0.35;
inline constexpr double kWordBiasAmplitude = 0.10;

// The default feature inventory used by the generator (phone, syllable,
// word and phrase level features).
FeatureSchema default_schema(int tone_count);

Corpus generate_synthetic(const SynthConfig& config);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Utterance-level random partition, deterministic in `seed`. Sizes are the
// rounded val/test shares; the remainder goes to train. Each output keeps
// the input's utterance order.
std::tuple<Corpus, Corpus, Corpus> split_corpus(const Corpus& corpus,
                                                const SplitRatios& ratios,
                                                std::uint64_t seed);

// F0LAB-CORPUS v1 text format. Floats carry 9 significant digits, so
// save(load(path)) reproduces the file byte for byte.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

void write_corpus(const Corpus& corpus, std::ostream& out);
Corpus read_corpus(std::istream& in, const std::string& source);

// Schema/tone blocks shared with the model formats.
void write_schema_block(const FeatureSchema& schema,
                        const std::vector<int>& tones, std::ostream& out);
std::pair<FeatureSchema, std::vector<int>> read_schema_block(
    textio::Reader& reader);

}  // namespace f0lab::corpus
