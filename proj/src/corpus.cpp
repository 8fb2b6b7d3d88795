#include "f0lab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <unordered_set>

#include "f0lab/text_io.hpp"

namespace f0lab::corpus {

namespace {

constexpr int kConsonants = 13;
constexpr int kVowels = 8;
constexpr int kVocabularySize = 200;
constexpr int kMaxWordSyllables = 3;
constexpr double kAccentDistanceCap = 40.0;

constexpr std::uint64_t kWordBiasSalt = 0x5b1dULL;
constexpr std::uint64_t kPhoneSalt = 0x9a7fULL;
constexpr std::uint64_t kToneSalt = 0x31c9ULL;

const char* const kPosTags[8] = {"n",    "v",   "adj", "adv",
                                 "pron", "num", "prt", "cnj"};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double unit_fraction(std::uint64_t h) { return (h >> 11) * 0x1.0p-53; }

// Fixed word list: each surface id maps deterministically to a syllable
// count, part-of-speech tag, segmental content and tones, so a given word
// looks the same wherever it occurs.
int word_syllable_count(int surface_id) {
  int r = surface_id % 10;
  if (r < 4) return 1;
  if (r < 9) return 2;
  return 3;
}

const char* word_pos_tag(int surface_id) { return kPosTags[surface_id % 8]; }

struct SylPhones {
  int consonant;
  int vowel;
  int phone_count;
  double duration;
};

SylPhones word_syl_phones(int surface_id, int syl) {
  std::uint64_t h = splitmix64(
      kPhoneSalt ^ (static_cast<std::uint64_t>(surface_id) * 8 + syl));
  SylPhones p{};
  p.consonant = static_cast<int>(h % kConsonants);
  p.vowel = static_cast<int>((h >> 8) % kVowels);
  p.phone_count = 2 + ((h >> 16) % 3 == 0 ? 1 : 0);
  double frac = ((h >> 24) & 0xfffffULL) / 1048576.0;
  // Quantized to 3 decimals so serialized values reload exactly.
  p.duration = std::round((0.10 + 0.02 * p.phone_count + 0.06 * frac) * 1e3) /
               1e3;
  return p;
}

int word_syl_tone(int surface_id, int syl, int tone_count) {
  std::uint64_t h = splitmix64(
      kToneSalt ^ (static_cast<std::uint64_t>(surface_id) * 8 + syl));
  if (syl > 0 && h % 100 < 12) return 0;
  return 1 + static_cast<int>((h >> 8) % tone_count);
}

std::string pad4(int v) {
  std::string s = std::to_string(v);
  while (s.size() < 4) s.insert(s.begin(), '0');
  return s;
}

std::string phone_name(char prefix, int index) {
  std::string s = std::to_string(index);
  if (s.size() < 2) s.insert(s.begin(), '0');
  return prefix + s;
}

double quantize_hz(double v) { return std::round(v * 1e5) / 1e5; }

FeatureDef cat(std::string name, FeatureLevel level,
               std::vector<std::string> values) {
  return FeatureDef{std::move(name), level, CategoricalKind{std::move(values)}};
}

FeatureDef num(std::string name, FeatureLevel level, double lo, double hi) {
  return FeatureDef{std::move(name), level, NumericKind{lo, hi}};
}

}  // namespace

const char* level_name(FeatureLevel level) {
  switch (level) {
    case FeatureLevel::phone: return "phone";
    case FeatureLevel::syllable: return "syllable";
    case FeatureLevel::word: return "word";
    case FeatureLevel::phrase: return "phrase";
  }
  raise(ErrorCode::invalid_config, "bad feature level value");
}

FeatureLevel level_from_name(const std::string& name) {
  if (name == "phone") return FeatureLevel::phone;
  if (name == "syllable") return FeatureLevel::syllable;
  if (name == "word") return FeatureLevel::word;
  if (name == "phrase") return FeatureLevel::phrase;
  raise(ErrorCode::parse, "unknown feature level '", name, "'");
}

FeatureSchema::FeatureSchema(std::vector<FeatureDef> entries)
    : entries_(std::move(entries)) {
  validate();
}

int FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<int>(i);
  return -1;
}

int FeatureSchema::value_code(std::size_t fi, const std::string& value) const {
  const auto& values = entries_[fi].categorical().values;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] == value) return static_cast<int>(i);
  return -1;
}

const std::string& FeatureSchema::value_name(std::size_t fi, int code) const {
  const auto& values = entries_[fi].categorical().values;
  require(code >= 0 && static_cast<std::size_t>(code) < values.size(),
          ErrorCode::mismatch, "feature ", entries_[fi].name,
          ": categorical code ", code, " out of range");
  return values[static_cast<std::size_t>(code)];
}

void FeatureSchema::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& def : entries_) {
    require(textio::valid_token(def.name), ErrorCode::invalid_config,
            "bad feature name '", def.name, "'");
    require(seen.insert(def.name).second, ErrorCode::invalid_config,
            "duplicate feature name '", def.name, "'");
    if (def.is_categorical()) {
      const auto& values = def.categorical().values;
      require(!values.empty(), ErrorCode::invalid_config, "feature ", def.name,
              ": empty categorical value set");
      std::unordered_set<std::string> vs;
      for (const auto& v : values) {
        require(textio::valid_token(v), ErrorCode::invalid_config, "feature ",
                def.name, ": bad categorical value '", v, "'");
        require(vs.insert(v).second, ErrorCode::invalid_config, "feature ",
                def.name, ": duplicate categorical value '", v, "'");
      }
    } else {
      require(def.numeric().lo <= def.numeric().hi, ErrorCode::invalid_config,
              "feature ", def.name, ": numeric range lo > hi");
    }
  }
}

std::size_t Corpus::syllable_count() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += u.syllables.size();
  return n;
}

void Corpus::validate() const {
  schema.validate();
  require(!tone_inventory.empty(), ErrorCode::invalid_config,
          "empty tone inventory");
  for (std::size_t i = 1; i < tone_inventory.size(); ++i)
    require(tone_inventory[i - 1] < tone_inventory[i],
            ErrorCode::invalid_config,
            "tone inventory not strictly increasing");
  std::set<int> tones(tone_inventory.begin(), tone_inventory.end());

  std::unordered_set<std::string> ids;
  for (const auto& u : utterances) {
    require(textio::valid_token(u.id), ErrorCode::mismatch,
            "bad utterance id '", u.id, "'");
    require(ids.insert(u.id).second, ErrorCode::mismatch,
            "duplicate utterance id '", u.id, "'");
    require(!u.syllables.empty(), ErrorCode::mismatch, "utterance ", u.id,
            ": no syllables");
    require(!u.words.empty(), ErrorCode::mismatch, "utterance ", u.id,
            ": no words");
    for (const auto& w : u.words)
      require(textio::valid_token(w.pos_tag), ErrorCode::mismatch, "utterance ",
              u.id, ": bad part-of-speech tag '", w.pos_tag, "'");

    int syl_count = static_cast<int>(u.syllables.size());
    require(!u.phrases.empty(), ErrorCode::mismatch, "utterance ", u.id,
            ": no phrases");
    int expect_start = 0;
    for (std::size_t p = 0; p < u.phrases.size(); ++p) {
      const auto& span = u.phrases[p];
      require(span.start == expect_start && span.end > span.start,
              ErrorCode::mismatch, "utterance ", u.id, ": phrase ", p,
              " does not continue the partition");
      expect_start = span.end;
    }
    require(expect_start == syl_count, ErrorCode::mismatch, "utterance ", u.id,
            ": phrases cover ", expect_start, " of ", syl_count, " syllables");

    int prev_word = -1;
    for (int s = 0; s < syl_count; ++s) {
      const auto& syl = u.syllables[static_cast<std::size_t>(s)];
      require(tones.count(syl.tone) > 0, ErrorCode::mismatch, "utterance ",
              u.id, ": syllable ", s, ": tone ", syl.tone,
              " not in the tone inventory");
      require((syl.word_index == prev_word || syl.word_index == prev_word + 1) &&
                  syl.word_index < static_cast<int>(u.words.size()),
              ErrorCode::mismatch, "utterance ", u.id, ": syllable ", s,
              ": word index ", syl.word_index, " breaks word order");
      prev_word = syl.word_index;
      require(syl.phrase_index >= 0 &&
                  syl.phrase_index < static_cast<int>(u.phrases.size()),
              ErrorCode::mismatch, "utterance ", u.id, ": syllable ", s,
              ": phrase index out of range");
      const auto& span = u.phrases[static_cast<std::size_t>(syl.phrase_index)];
      require(s >= span.start && s < span.end, ErrorCode::mismatch,
              "utterance ", u.id, ": syllable ", s,
              ": phrase index does not match the covering span");
      require(syl.features.size() == schema.size(), ErrorCode::mismatch,
              "utterance ", u.id, ": syllable ", s, ": has ",
              syl.features.size(), " features, schema has ", schema.size());
      for (std::size_t fi = 0; fi < schema.size(); ++fi) {
        const auto& def = schema.at(fi);
        const auto& fv = syl.features[fi];
        if (def.is_categorical()) {
          require(std::holds_alternative<int>(fv), ErrorCode::mismatch,
                  "utterance ", u.id, ": syllable ", s, ": feature ", def.name,
                  ": expected categorical code");
          int code = std::get<int>(fv);
          require(code >= 0 && code < static_cast<int>(
                                          def.categorical().values.size()),
                  ErrorCode::mismatch, "utterance ", u.id, ": syllable ", s,
                  ": feature ", def.name, ": code ", code, " out of range");
        } else {
          require(std::holds_alternative<double>(fv), ErrorCode::mismatch,
                  "utterance ", u.id, ": syllable ", s, ": feature ", def.name,
                  ": expected numeric value");
          require(std::isfinite(std::get<double>(fv)), ErrorCode::mismatch,
                  "utterance ", u.id, ": syllable ", s, ": feature ", def.name,
                  ": non-finite value");
        }
      }
      for (int i = 0; i < kContourPoints; ++i) {
        double v = syl.contour[static_cast<std::size_t>(i)];
        require(std::isfinite(v) && v > 0.0, ErrorCode::mismatch, "utterance ",
                u.id, ": syllable ", s, ": contour point ", i,
                " not a positive frequency");
      }
    }
    require(prev_word == static_cast<int>(u.words.size()) - 1,
            ErrorCode::mismatch, "utterance ", u.id,
            ": syllables do not cover every word");
  }
}

void SynthConfig::validate() const {
  require(n_utterances >= 1, ErrorCode::invalid_config,
          "n_utterances must be at least 1");
  require(tone_count == 4 || tone_count == 6, ErrorCode::invalid_config,
          "tone_count must be 4 or 6, got ", tone_count);
  require(syllables_per_utterance.lo >= 1, ErrorCode::invalid_config,
          "syllables_per_utterance must start at 1 or more");
  require(syllables_per_utterance.lo <= syllables_per_utterance.hi,
          ErrorCode::invalid_config,
          "syllables_per_utterance range has min > max");
  require(phrases_per_utterance.lo >= 1, ErrorCode::invalid_config,
          "phrases_per_utterance must start at 1 or more");
  require(phrases_per_utterance.lo <= phrases_per_utterance.hi,
          ErrorCode::invalid_config, "phrases_per_utterance range has min > max");
  require(speaker_mean_hz > 0.0, ErrorCode::invalid_config,
          "speaker_mean_hz must be positive");
  require(speaker_range_hz >= 0.0, ErrorCode::invalid_config,
          "speaker_range_hz must be non-negative");
  require(std::isfinite(declination_slope), ErrorCode::invalid_config,
          "declination_slope must be finite");
  require(emphasis_probability >= 0.0 && emphasis_probability <= 1.0,
          ErrorCode::invalid_config, "emphasis_probability must be in [0,1]");
  require(noise_std_hz >= 0.0, ErrorCode::invalid_config,
          "noise_std_hz must be non-negative");
}

Contour tone_template(int tone_count, int tone) {
  require(tone_count == 4 || tone_count == 6, ErrorCode::invalid_config,
          "tone_count must be 4 or 6, got ", tone_count);
  require(tone >= 0 && tone <= tone_count, ErrorCode::invalid_config,
          "tone id ", tone, " outside [0, ", tone_count, "]");
  Contour c{};
  for (int i = 0; i < kContourPoints; ++i) {
    double x = i / 9.0;
    double s = std::sin(std::numbers::pi * x);
    double v = 0.0;
    if (tone_count == 4) {
      switch (tone) {
        case 0: v = -0.05 - 0.10 * x; break;            // neutral, short mid
        case 1: v = 0.55 + 0.08 * s; break;             // high level
        case 2: v = -0.35 + 0.90 * x * x; break;        // rising
        case 3: v = -0.25 - 0.40 * s + 0.20 * x; break; // fall-rise
        case 4: v = 0.75 - 1.30 * x; break;             // falling
      }
    } else {
      switch (tone) {
        case 0: v = -0.05 - 0.10 * x; break;
        case 1: v = 0.60 + 0.05 * s; break;             // high level
        case 2: v = -0.10 + 0.70 * x * x; break;        // high rising
        case 3: v = 0.15 + 0.03 * s; break;             // mid level
        case 4: v = -0.25 - 0.45 * x; break;            // low falling
        case 5: v = -0.35 + 0.45 * x * x; break;        // low rising
        case 6: v = -0.30 - 0.05 * x; break;            // low level
      }
    }
    c[static_cast<std::size_t>(i)] = v;
  }
  return c;
}

Contour emphasis_shape() {
  Contour c{};
  for (int i = 0; i < kContourPoints; ++i)
    c[static_cast<std::size_t>(i)] =
        std::sin(std::numbers::pi * (i + 0.5) / kContourPoints);
  return c;
}

double word_bias(int surface_id) {
  std::uint64_t h =
      splitmix64(kWordBiasSalt ^ static_cast<std::uint64_t>(surface_id));
  return 2.0 * unit_fraction(h) - 1.0;
}

FeatureSchema default_schema(int tone_count) {
  require(tone_count == 4 || tone_count == 6, ErrorCode::invalid_config,
          "tone_count must be 4 or 6, got ", tone_count);

  std::vector<std::string> consonants, vowels, syl_names;
  for (int c = 0; c < kConsonants; ++c) consonants.push_back(phone_name('c', c));
  for (int v = 0; v < kVowels; ++v) vowels.push_back(phone_name('v', v + 1));
  for (const auto& c : consonants)
    for (const auto& v : vowels) syl_names.push_back(c + v);

  std::vector<std::string> tone_values = {"none"};
  for (int t = 0; t <= tone_count; ++t)
    tone_values.push_back("t" + std::to_string(t));

  std::vector<std::string> accented = {"none", "no", "yes"};
  std::vector<std::string> accent_names = {"none", "emph"};
  std::vector<std::string> breaks = {"none", "b0", "b1", "b3", "b4"};
  std::vector<std::string> pos_values = {"none"};
  for (const char* tag : kPosTags) pos_values.emplace_back(tag);

  std::vector<FeatureDef> defs;
  defs.push_back(cat("consonant", FeatureLevel::phone, consonants));
  defs.push_back(cat("vowel", FeatureLevel::phone, vowels));
  defs.push_back(num("phone_count_prev", FeatureLevel::phone, 0, 4));
  defs.push_back(num("phone_count_cur", FeatureLevel::phone, 0, 4));
  defs.push_back(num("phone_count_next", FeatureLevel::phone, 0, 4));

  defs.push_back(cat("syl_name", FeatureLevel::syllable, syl_names));
  defs.push_back(num("duration", FeatureLevel::syllable, 0.05, 0.50));
  defs.push_back(cat("tone_prev", FeatureLevel::syllable, tone_values));
  defs.push_back(cat("tone_cur", FeatureLevel::syllable, tone_values));
  defs.push_back(cat("tone_next", FeatureLevel::syllable, tone_values));
  defs.push_back(cat("accented_prev", FeatureLevel::syllable, accented));
  defs.push_back(cat("accented_cur", FeatureLevel::syllable, accented));
  defs.push_back(cat("accented_next", FeatureLevel::syllable, accented));
  defs.push_back(cat("accent_name_prev", FeatureLevel::syllable, accent_names));
  defs.push_back(cat("accent_name_cur", FeatureLevel::syllable, accent_names));
  defs.push_back(cat("accent_name_next", FeatureLevel::syllable, accent_names));
  defs.push_back(cat("break_prev", FeatureLevel::syllable, breaks));
  defs.push_back(cat("break_cur", FeatureLevel::syllable, breaks));
  defs.push_back(cat("break_next", FeatureLevel::syllable, breaks));
  defs.push_back(num("dist_last_accent", FeatureLevel::syllable, 0,
                     kAccentDistanceCap));
  defs.push_back(num("dist_next_accent", FeatureLevel::syllable, 0,
                     kAccentDistanceCap));
  defs.push_back(num("stressed_from_break", FeatureLevel::syllable, 0, 30));
  defs.push_back(num("stressed_to_break", FeatureLevel::syllable, 0, 30));
  defs.push_back(num("accented_from_break", FeatureLevel::syllable, 0, 30));
  defs.push_back(num("accented_to_break", FeatureLevel::syllable, 0, 30));
  defs.push_back(num("syl_pos_word", FeatureLevel::syllable, 0,
                     kMaxWordSyllables - 1));
  defs.push_back(num("syl_pos_phrase", FeatureLevel::syllable, 0, 30));

  defs.push_back(cat("pos_prev", FeatureLevel::word, pos_values));
  defs.push_back(cat("pos_cur", FeatureLevel::word, pos_values));
  defs.push_back(cat("pos_next", FeatureLevel::word, pos_values));
  defs.push_back(num("word_pos_utt", FeatureLevel::word, 0, 30));

  defs.push_back(num("phrase_pos_utt", FeatureLevel::phrase, 0, 10));
  defs.push_back(num("phrase_count_utt", FeatureLevel::phrase, 1, 10));
  defs.push_back(num("syls_in_phrase", FeatureLevel::phrase, 1, 30));

  return FeatureSchema(std::move(defs));
}

Corpus generate_synthetic(const SynthConfig& config) {
  config.validate();

  Corpus corpus;
  corpus.schema = default_schema(config.tone_count);
  for (int t = 0; t <= config.tone_count; ++t)
    corpus.tone_inventory.push_back(t);
  const FeatureSchema& schema = corpus.schema;

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> syl_dist(config.syllables_per_utterance.lo,
                                              config.syllables_per_utterance.hi);
  std::uniform_int_distribution<int> phr_dist(config.phrases_per_utterance.lo,
                                              config.phrases_per_utterance.hi);
  std::uniform_int_distribution<int> word_dist(0, kVocabularySize - 1);
  std::uniform_real_distribution<double> unit_dist(0.0, 1.0);
  std::normal_distribution<double> noise_dist(0.0, 1.0);

  Contour emphasis = emphasis_shape();

  corpus.utterances.reserve(static_cast<std::size_t>(config.n_utterances));
  for (int ui = 0; ui < config.n_utterances; ++ui) {
    UtteranceRecord utt;
    utt.id = "u" + pad4(ui);

    int target_syls = syl_dist(rng);
    int phrase_target = phr_dist(rng);

    // Draw words until the syllable budget is met exactly; a word longer
    // than the remainder is redrawn (single-syllable words always fit).
    std::vector<int> word_ids;
    int remaining = target_syls;
    while (remaining > 0) {
      int wid = word_dist(rng);
      int len = word_syllable_count(wid);
      if (len > remaining) continue;
      word_ids.push_back(wid);
      remaining -= len;
    }
    int n_words = static_cast<int>(word_ids.size());
    int n_phrases = std::min(phrase_target, n_words);

    // Phrase boundaries fall on word boundaries.
    std::vector<int> cuts;
    if (n_phrases > 1) {
      std::vector<int> candidates;
      for (int w = 1; w < n_words; ++w) candidates.push_back(w);
      std::shuffle(candidates.begin(), candidates.end(), rng);
      cuts.assign(candidates.begin(), candidates.begin() + (n_phrases - 1));
      std::sort(cuts.begin(), cuts.end());
    }
    cuts.push_back(n_words);

    std::vector<bool> emphasized(static_cast<std::size_t>(n_words));
    for (int w = 0; w < n_words; ++w)
      emphasized[static_cast<std::size_t>(w)] =
          unit_dist(rng) < config.emphasis_probability;

    // Per-syllable layout tables.
    std::vector<int> word_of, syl_in_word, phrase_of, tones;
    std::vector<SylPhones> phones;
    {
      int phrase = 0;
      for (int widx = 0; widx < n_words; ++widx) {
        if (widx == cuts[static_cast<std::size_t>(phrase)]) ++phrase;
        int wid = word_ids[static_cast<std::size_t>(widx)];
        int len = word_syllable_count(wid);
        for (int s = 0; s < len; ++s) {
          word_of.push_back(widx);
          syl_in_word.push_back(s);
          phrase_of.push_back(phrase);
          tones.push_back(word_syl_tone(wid, s, config.tone_count));
          phones.push_back(word_syl_phones(wid, s));
        }
      }
    }
    int total_syls = static_cast<int>(word_of.size());

    for (int widx = 0; widx < n_words; ++widx)
      utt.words.push_back(
          WordEntry{word_ids[static_cast<std::size_t>(widx)],
                    word_pos_tag(word_ids[static_cast<std::size_t>(widx)])});

    {
      int start = 0;
      for (int p = 0; p < n_phrases; ++p) {
        int end = start;
        while (end < total_syls &&
               phrase_of[static_cast<std::size_t>(end)] == p)
          ++end;
        utt.phrases.push_back(PhraseSpan{start, end});
        start = end;
      }
    }

    std::vector<bool> accented(static_cast<std::size_t>(total_syls));
    std::vector<bool> stressed(static_cast<std::size_t>(total_syls));
    for (int s = 0; s < total_syls; ++s) {
      accented[static_cast<std::size_t>(s)] =
          emphasized[static_cast<std::size_t>(word_of[static_cast<std::size_t>(
              s)])];
      stressed[static_cast<std::size_t>(s)] =
          tones[static_cast<std::size_t>(s)] != 0;
    }

    auto break_after = [&](int s) -> const char* {
      if (s == total_syls - 1) return "b4";
      const auto& span =
          utt.phrases[static_cast<std::size_t>(phrase_of[static_cast<std::size_t>(s)])];
      if (s == span.end - 1) return "b3";
      if (word_of[static_cast<std::size_t>(s)] !=
          word_of[static_cast<std::size_t>(s + 1)])
        return "b1";
      return "b0";
    };

    for (int s = 0; s < total_syls; ++s) {
      SyllableRecord syl;
      syl.tone = tones[static_cast<std::size_t>(s)];
      syl.word_index = word_of[static_cast<std::size_t>(s)];
      syl.phrase_index = phrase_of[static_cast<std::size_t>(s)];
      syl.features.resize(schema.size());

      auto set_num = [&](const char* name, double v) {
        int ix = schema.index_of(name);
        require(ix >= 0, ErrorCode::invalid_config, "schema misses ", name);
        syl.features[static_cast<std::size_t>(ix)] = v;
      };
      auto set_cat = [&](const char* name, const std::string& value) {
        int ix = schema.index_of(name);
        require(ix >= 0, ErrorCode::invalid_config, "schema misses ", name);
        int code = schema.value_code(static_cast<std::size_t>(ix), value);
        require(code >= 0, ErrorCode::invalid_config, "feature ", name,
                ": generator produced unknown value '", value, "'");
        syl.features[static_cast<std::size_t>(ix)] = code;
      };

      const SylPhones& ph = phones[static_cast<std::size_t>(s)];
      const auto& span = utt.phrases[static_cast<std::size_t>(syl.phrase_index)];
      int pos_in_phrase = s - span.start;

      set_cat("consonant", phone_name('c', ph.consonant));
      set_cat("vowel", phone_name('v', ph.vowel + 1));
      set_num("phone_count_prev",
              s > 0 ? phones[static_cast<std::size_t>(s - 1)].phone_count : 0);
      set_num("phone_count_cur", ph.phone_count);
      set_num("phone_count_next",
              s + 1 < total_syls
                  ? phones[static_cast<std::size_t>(s + 1)].phone_count
                  : 0);

      set_cat("syl_name",
              phone_name('c', ph.consonant) + phone_name('v', ph.vowel + 1));
      set_num("duration", ph.duration);

      auto tone_name = [](int t) { return "t" + std::to_string(t); };
      set_cat("tone_prev",
              s > 0 ? tone_name(tones[static_cast<std::size_t>(s - 1)])
                    : std::string("none"));
      set_cat("tone_cur", tone_name(syl.tone));
      set_cat("tone_next",
              s + 1 < total_syls
                  ? tone_name(tones[static_cast<std::size_t>(s + 1)])
                  : std::string("none"));

      auto acc_value = [&](int idx) -> std::string {
        if (idx < 0 || idx >= total_syls) return "none";
        return accented[static_cast<std::size_t>(idx)] ? "yes" : "no";
      };
      set_cat("accented_prev", acc_value(s - 1));
      set_cat("accented_cur", acc_value(s));
      set_cat("accented_next", acc_value(s + 1));

      auto acc_name = [&](int idx) -> std::string {
        if (idx < 0 || idx >= total_syls) return "none";
        return accented[static_cast<std::size_t>(idx)] ? "emph" : "none";
      };
      set_cat("accent_name_prev", acc_name(s - 1));
      set_cat("accent_name_cur", acc_name(s));
      set_cat("accent_name_next", acc_name(s + 1));

      set_cat("break_prev", s > 0 ? break_after(s - 1) : "none");
      set_cat("break_cur", break_after(s));
      set_cat("break_next", s + 1 < total_syls ? break_after(s + 1) : "none");

      auto dist_to_accent = [&](int step) {
        if (accented[static_cast<std::size_t>(s)]) return 0.0;
        for (int d = 1;; ++d) {
          int j = s + step * d;
          if (j < 0 || j >= total_syls || d >= kAccentDistanceCap)
            return kAccentDistanceCap;
          if (accented[static_cast<std::size_t>(j)]) return double(d);
        }
      };
      set_num("dist_last_accent", dist_to_accent(-1));
      set_num("dist_next_accent", dist_to_accent(+1));

      auto count_in = [&](const std::vector<bool>& flags, int lo, int hi) {
        int n = 0;
        for (int j = lo; j <= hi; ++j)
          if (flags[static_cast<std::size_t>(j)]) ++n;
        return double(n);
      };
      set_num("stressed_from_break", count_in(stressed, span.start, s));
      set_num("stressed_to_break", count_in(stressed, s, span.end - 1));
      set_num("accented_from_break", count_in(accented, span.start, s));
      set_num("accented_to_break", count_in(accented, s, span.end - 1));
      set_num("syl_pos_word", syl_in_word[static_cast<std::size_t>(s)]);
      set_num("syl_pos_phrase", pos_in_phrase);

      auto pos_of_word = [&](int w) -> std::string {
        if (w < 0 || w >= n_words) return "none";
        return word_pos_tag(word_ids[static_cast<std::size_t>(w)]);
      };
      set_cat("pos_prev", pos_of_word(syl.word_index - 1));
      set_cat("pos_cur", pos_of_word(syl.word_index));
      set_cat("pos_next", pos_of_word(syl.word_index + 1));
      set_num("word_pos_utt", syl.word_index);

      set_num("phrase_pos_utt", syl.phrase_index);
      set_num("phrase_count_utt", n_phrases);
      set_num("syls_in_phrase", span.end - span.start);

      Contour tmpl = tone_template(config.tone_count, syl.tone);
      int wid = word_ids[static_cast<std::size_t>(syl.word_index)];
      double bias =
          word_bias(wid) * kWordBiasAmplitude * config.speaker_range_hz;
      bool emph = accented[static_cast<std::size_t>(s)];
      for (int i = 0; i < kContourPoints; ++i) {
        double v = config.speaker_mean_hz +
                   config.speaker_range_hz * tmpl[static_cast<std::size_t>(i)] +
                   config.declination_slope * pos_in_phrase + bias;
        if (emph)
          v += kEmphasisAmplitude * config.speaker_range_hz *
               emphasis[static_cast<std::size_t>(i)];
        v += config.noise_std_hz * noise_dist(rng);
        syl.contour[static_cast<std::size_t>(i)] =
            quantize_hz(std::clamp(v, 50.0, 600.0));
      }

      utt.syllables.push_back(std::move(syl));
    }

    corpus.utterances.push_back(std::move(utt));
  }

  corpus.validate();
  return corpus;
}

std::tuple<Corpus, Corpus, Corpus> split_corpus(const Corpus& corpus,
                                                const SplitRatios& ratios,
                                                std::uint64_t seed) {
  require(ratios.train >= 0 && ratios.val >= 0 && ratios.test >= 0,
          ErrorCode::invalid_config, "split ratios must be non-negative");
  double sum = ratios.train + ratios.val + ratios.test;
  require(std::abs(sum - 1.0) <= 1e-9, ErrorCode::invalid_config,
          "split ratios sum to ", sum, ", expected 1");
  std::size_t n = corpus.utterances.size();
  require(n >= 3, ErrorCode::invalid_config,
          "need at least 3 utterances to split, got ", n);

  auto n_val = static_cast<std::size_t>(std::llround(ratios.val * double(n)));
  auto n_test = static_cast<std::size_t>(std::llround(ratios.test * double(n)));
  require(n_val + n_test <= n, ErrorCode::invalid_config,
          "val/test shares exceed the corpus size");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<int> part(n, 0);
  for (std::size_t i = 0; i < n_val; ++i) part[order[i]] = 1;
  for (std::size_t i = n_val; i < n_val + n_test; ++i) part[order[i]] = 2;

  Corpus out[3];
  for (auto& c : out) {
    c.schema = corpus.schema;
    c.tone_inventory = corpus.tone_inventory;
  }
  for (std::size_t i = 0; i < n; ++i)
    out[part[i]].utterances.push_back(corpus.utterances[i]);
  return {std::move(out[0]), std::move(out[1]), std::move(out[2])};
}

void write_schema_block(const FeatureSchema& schema,
                        const std::vector<int>& tones, std::ostream& out) {
  out << "schema " << schema.size() << "\n";
  for (const auto& def : schema.entries()) {
    out << "feature " << def.name << " " << level_name(def.level);
    if (def.is_categorical()) {
      const auto& values = def.categorical().values;
      out << " cat " << values.size();
      for (const auto& v : values) out << " " << v;
    } else {
      out << " num " << textio::format_double(def.numeric().lo) << " "
          << textio::format_double(def.numeric().hi);
    }
    out << "\n";
  }
  out << "tones " << tones.size();
  for (int t : tones) out << " " << t;
  out << "\n";
}

std::pair<FeatureSchema, std::vector<int>> read_schema_block(
    textio::Reader& reader) {
  reader.expect("schema");
  long long n = reader.next_int("feature count");
  if (n < 0) reader.fail("negative feature count");
  std::vector<FeatureDef> defs;
  for (long long i = 0; i < n; ++i) {
    reader.expect("feature");
    FeatureDef def;
    def.name = reader.next_word("feature name");
    def.level = level_from_name(reader.next_word("feature level"));
    std::string kind = reader.next_word("feature kind");
    if (kind == "cat") {
      long long k = reader.next_int("value count");
      if (k <= 0) reader.fail("feature ", def.name, ": bad value count ", k);
      CategoricalKind ck;
      for (long long j = 0; j < k; ++j)
        ck.values.push_back(reader.next_word("categorical value"));
      def.kind = std::move(ck);
    } else if (kind == "num") {
      NumericKind nk;
      nk.lo = reader.next_double("numeric range low");
      nk.hi = reader.next_double("numeric range high");
      def.kind = nk;
    } else {
      reader.fail("unknown feature kind '", kind, "'");
    }
    defs.push_back(std::move(def));
  }
  reader.expect("tones");
  long long k = reader.next_int("tone count");
  if (k <= 0) reader.fail("bad tone count ", k);
  std::vector<int> tones;
  for (long long i = 0; i < k; ++i)
    tones.push_back(static_cast<int>(reader.next_int("tone id")));
  return {FeatureSchema(std::move(defs)), std::move(tones)};
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  out << "F0LAB-CORPUS v1\n";
  write_schema_block(corpus.schema, corpus.tone_inventory, out);
  out << "utterances " << corpus.utterances.size() << "\n";
  for (const auto& u : corpus.utterances) {
    out << "utt " << u.id << "\n";
    out << "words " << u.words.size() << "\n";
    for (const auto& w : u.words)
      out << "word " << w.surface_id << " " << w.pos_tag << "\n";
    out << "phrases " << u.phrases.size() << "\n";
    for (const auto& p : u.phrases)
      out << "phrase " << p.start << " " << p.end << "\n";
    out << "syls " << u.syllables.size() << "\n";
    for (const auto& s : u.syllables) {
      out << "syl " << s.tone << " " << s.word_index << " " << s.phrase_index
          << "\n";
      out << "f0 " << kContourPoints;
      for (double v : s.contour) out << " " << textio::format_double(v);
      out << "\n";
      out << "feat " << s.features.size();
      for (std::size_t fi = 0; fi < s.features.size(); ++fi) {
        const auto& def = corpus.schema.at(fi);
        if (def.is_categorical())
          out << " "
              << corpus.schema.value_name(fi, std::get<int>(s.features[fi]));
        else
          out << " " << textio::format_double(std::get<double>(s.features[fi]));
      }
      out << "\n";
    }
    out << "end\n";
  }
}

Corpus read_corpus(std::istream& in, const std::string& source) {
  textio::Reader reader(in, source);
  reader.expect_header("F0LAB-CORPUS", "v1");

  Corpus corpus;
  auto [schema, tones] = read_schema_block(reader);
  corpus.schema = std::move(schema);
  corpus.tone_inventory = std::move(tones);

  reader.expect("utterances");
  long long n_utts = reader.next_int("utterance count");
  if (n_utts < 0) reader.fail("negative utterance count");
  for (long long ui = 0; ui < n_utts; ++ui) {
    reader.set_context("");
    reader.expect("utt");
    UtteranceRecord utt;
    utt.id = reader.next_word("utterance id");
    reader.set_context("utterance " + utt.id);

    reader.expect("words");
    long long n_words = reader.next_int("word count");
    for (long long w = 0; w < n_words; ++w) {
      reader.expect("word");
      WordEntry entry;
      entry.surface_id = static_cast<int>(reader.next_int("word surface id"));
      entry.pos_tag = reader.next_word("part-of-speech tag");
      utt.words.push_back(std::move(entry));
    }

    reader.expect("phrases");
    long long n_phrases = reader.next_int("phrase count");
    for (long long p = 0; p < n_phrases; ++p) {
      reader.expect("phrase");
      PhraseSpan span;
      span.start = static_cast<int>(reader.next_int("phrase start"));
      span.end = static_cast<int>(reader.next_int("phrase end"));
      utt.phrases.push_back(span);
    }

    reader.expect("syls");
    long long n_syls = reader.next_int("syllable count");
    for (long long s = 0; s < n_syls; ++s) {
      reader.set_context("utterance " + utt.id + " syllable " +
                         std::to_string(s));
      reader.expect("syl");
      SyllableRecord syl;
      syl.tone = static_cast<int>(reader.next_int("tone"));
      syl.word_index = static_cast<int>(reader.next_int("word index"));
      syl.phrase_index = static_cast<int>(reader.next_int("phrase index"));

      reader.expect("f0");
      long long n_points = reader.next_int("contour length");
      if (n_points != kContourPoints)
        reader.fail_at(ErrorCode::mismatch, "contour length ", n_points,
                       ", expected ", kContourPoints);
      for (int i = 0; i < kContourPoints; ++i)
        syl.contour[static_cast<std::size_t>(i)] =
            reader.next_double("contour point");

      reader.expect("feat");
      long long n_feat = reader.next_int("feature count");
      if (n_feat != static_cast<long long>(corpus.schema.size()))
        reader.fail_at(ErrorCode::mismatch, "record has ", n_feat,
                       " features, schema has ", corpus.schema.size());
      syl.features.resize(corpus.schema.size());
      for (std::size_t fi = 0; fi < corpus.schema.size(); ++fi) {
        const auto& def = corpus.schema.at(fi);
        if (def.is_categorical()) {
          std::string value = reader.next_word("categorical value");
          int code = corpus.schema.value_code(fi, value);
          if (code < 0)
            reader.fail_at(ErrorCode::mismatch, "feature ", def.name,
                           ": unknown value '", value, "'");
          syl.features[fi] = code;
        } else {
          syl.features[fi] = reader.next_double(def.name.c_str());
        }
      }
      utt.syllables.push_back(std::move(syl));
    }
    reader.set_context("utterance " + utt.id);
    reader.expect("end");
    corpus.utterances.push_back(std::move(utt));
  }
  corpus.validate();
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  corpus.validate();
  auto out = textio::open_output(path);
  write_corpus(corpus, out);
  require(out.good(), ErrorCode::io, "failed writing ", path);
}

Corpus load_corpus(const std::string& path) {
  auto in = textio::open_input(path);
  return read_corpus(in, path);
}

}  // namespace f0lab::corpus
