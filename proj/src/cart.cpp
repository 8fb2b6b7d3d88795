#include "f0lab/cart.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "f0lab/kernels.hpp"
#include "f0lab/text_io.hpp"

namespace f0lab::cart {

using contour::BaseKind;
using contour::DeltaKind;
using contour::RepresentationSpec;
using corpus::Contour;
using corpus::FeatureSchema;
using corpus::FeatureValue;
using corpus::kContourPoints;

const char* arch_name(ArchKind kind) {
  switch (kind) {
    case ArchKind::sindt: return "sindt";
    case ArchKind::tonedt: return "tonedt";
    case ArchKind::pslevel: return "pslevel";
    case ArchKind::scalardt: return "scalardt";
  }
  raise(ErrorCode::invalid_config, "bad architecture value");
}

ArchKind arch_from_name(const std::string& name) {
  if (name == "sindt") return ArchKind::sindt;
  if (name == "tonedt") return ArchKind::tonedt;
  if (name == "pslevel") return ArchKind::pslevel;
  if (name == "scalardt") return ArchKind::scalardt;
  raise(ErrorCode::invalid_config, "unknown architecture '", name,
        "', expected sindt, tonedt, pslevel or scalardt");
}

void ArchitectureSpec::validate() const {
  representation.validate();
  if (kind == ArchKind::pslevel || kind == ArchKind::scalardt)
    require(representation.base != BaseKind::shapems, ErrorCode::invalid_config,
            arch_name(kind),
            " predicts plain vectors and does not support shapems");
}

namespace {

// Running first and second moments over the active target dimensions.
struct Moments {
  long long n = 0;
  std::vector<double> sum, sq;

  void init(std::size_t d) {
    n = 0;
    sum.assign(d, 0.0);
    sq.assign(d, 0.0);
  }
  void add(const double* x) {
    ++n;
    kernels::acc_moments(x, sum.size(), sum.data(), sq.data());
  }
  void add(const Moments& o) {
    n += o.n;
    for (std::size_t d = 0; d < sum.size(); ++d) {
      sum[d] += o.sum[d];
      sq[d] += o.sq[d];
    }
  }
  void subtract_into(const Moments& part, Moments& out) const {
    out.n = n - part.n;
    out.sum.resize(sum.size());
    out.sq.resize(sq.size());
    for (std::size_t d = 0; d < sum.size(); ++d) {
      out.sum[d] = sum[d] - part.sum[d];
      out.sq[d] = sq[d] - part.sq[d];
    }
  }
  // Summed squared error around the per-dimension mean.
  double impurity() const {
    if (n == 0) return 0.0;
    double total = 0.0;
    for (std::size_t d = 0; d < sum.size(); ++d)
      total += std::max(0.0, sq[d] - sum[d] * sum[d] / double(n));
    return total;
  }
};

struct SplitContext {
  const FeatureSchema* schema = nullptr;
  const std::vector<Sample>* samples = nullptr;
  std::vector<int> features;       // candidate schema indices, ascending
  std::vector<int> active;         // impurity dimensions
  std::size_t full_dim = 0;
  int min_leaf = 10;
  int max_depth = 0;
  std::vector<std::vector<double>> packed;   // n rows, active dims
  std::vector<std::vector<double>> num_col;  // per schema feature
  std::vector<std::vector<int>> cat_col;
};

SplitContext make_context(const FeatureSchema& schema,
                          const std::vector<Sample>& samples,
                          const TreeConfig& config,
                          const std::vector<int>* feature_override) {
  require(!samples.empty(), ErrorCode::invalid_config,
          "cannot train a tree on an empty sample set");
  require(config.min_leaf >= 1, ErrorCode::invalid_config,
          "min_leaf must be at least 1");

  SplitContext ctx;
  ctx.schema = &schema;
  ctx.samples = &samples;
  ctx.min_leaf = config.min_leaf;
  ctx.max_depth = config.max_depth;
  ctx.full_dim = samples[0].target.size();
  require(ctx.full_dim > 0, ErrorCode::invalid_config,
          "samples carry empty targets");

  if (feature_override) {
    ctx.features = *feature_override;
  } else if (!config.active_features.empty()) {
    ctx.features = config.active_features;
  } else {
    for (std::size_t f = 0; f < schema.size(); ++f)
      ctx.features.push_back(static_cast<int>(f));
  }
  std::sort(ctx.features.begin(), ctx.features.end());
  for (int f : ctx.features)
    require(f >= 0 && f < static_cast<int>(schema.size()),
            ErrorCode::invalid_config, "feature index ", f,
            " outside the schema");

  if (!config.active_outputs.empty()) {
    ctx.active = config.active_outputs;
    std::sort(ctx.active.begin(), ctx.active.end());
    for (int d : ctx.active)
      require(d >= 0 && static_cast<std::size_t>(d) < ctx.full_dim,
              ErrorCode::invalid_config, "output dimension ", d,
              " outside the target");
  } else {
    for (std::size_t d = 0; d < ctx.full_dim; ++d)
      ctx.active.push_back(static_cast<int>(d));
  }

  std::size_t n = samples.size();
  ctx.packed.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[i];
    require(s.features != nullptr, ErrorCode::invalid_config,
            "sample without features");
    require(s.features->size() == schema.size(), ErrorCode::mismatch,
            "sample has ", s.features->size(), " features, schema has ",
            schema.size());
    require(s.target.size() == ctx.full_dim, ErrorCode::mismatch,
            "sample target dimension ", s.target.size(),
            " differs from the first sample's ", ctx.full_dim);
    ctx.packed[i].reserve(ctx.active.size());
    for (int d : ctx.active)
      ctx.packed[i].push_back(s.target[static_cast<std::size_t>(d)]);
  }

  ctx.num_col.resize(schema.size());
  ctx.cat_col.resize(schema.size());
  for (int f : ctx.features) {
    auto fi = static_cast<std::size_t>(f);
    const auto& def = schema.at(fi);
    if (def.is_categorical()) {
      auto& col = ctx.cat_col[fi];
      col.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& fv = (*samples[i].features)[fi];
        require(std::holds_alternative<int>(fv), ErrorCode::mismatch,
                "feature ", def.name, ": expected a categorical code");
        col[i] = std::get<int>(fv);
      }
    } else {
      auto& col = ctx.num_col[fi];
      col.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& fv = (*samples[i].features)[fi];
        require(std::holds_alternative<double>(fv), ErrorCode::mismatch,
                "feature ", def.name, ": expected a numeric value");
        col[i] = std::get<double>(fv);
      }
    }
  }
  return ctx;
}

Moments group_moments(const SplitContext& ctx, const std::vector<int>& idx) {
  Moments m;
  m.init(ctx.active.size());
  for (int i : idx) m.add(ctx.packed[static_cast<std::size_t>(i)].data());
  return m;
}

struct SplitResult {
  Question question;
  double children_sse = 0.0;
};

std::optional<SplitResult> best_split_on(const SplitContext& ctx,
                                         const std::vector<int>& idx,
                                         const Moments& totals) {
  auto n = static_cast<long long>(idx.size());
  if (n < 2 * ctx.min_leaf) return std::nullopt;

  double parent_sse = totals.impurity();
  double best_sse = parent_sse;
  std::optional<SplitResult> best;
  auto consider = [&](const Question& q, double sse) {
    if (sse < best_sse) {
      best_sse = sse;
      best = SplitResult{q, sse};
    }
  };

  std::vector<Moments> cat_acc;
  Moments complement;
  std::vector<int> order;

  for (int f : ctx.features) {
    auto fi = static_cast<std::size_t>(f);
    const auto& def = ctx.schema->at(fi);
    if (def.is_categorical()) {
      auto n_values = static_cast<int>(def.categorical().values.size());
      cat_acc.assign(static_cast<std::size_t>(n_values), Moments{});
      for (int i : idx) {
        int c = ctx.cat_col[fi][static_cast<std::size_t>(i)];
        require(c >= 0 && c < n_values, ErrorCode::mismatch, "feature ",
                def.name, ": code ", c, " out of range");
        auto& acc = cat_acc[static_cast<std::size_t>(c)];
        if (acc.sum.empty()) acc.init(ctx.active.size());
        acc.add(ctx.packed[static_cast<std::size_t>(i)].data());
      }
      std::vector<int> observed;
      for (int c = 0; c < n_values; ++c)
        if (cat_acc[static_cast<std::size_t>(c)].n > 0) observed.push_back(c);
      if (observed.size() < 2) continue;

      // With two observed values the mirrored questions tie exactly; the
      // no side is then built from the sibling accumulator so both orders
      // produce bit-identical scores and the code tie-break decides.
      bool binary = observed.size() == 2;
      Moments all;
      if (!binary) {
        all.init(ctx.active.size());
        for (int c : observed) all.add(cat_acc[static_cast<std::size_t>(c)]);
      }
      for (std::size_t oi = 0; oi < observed.size(); ++oi) {
        int c = observed[oi];
        const auto& yes = cat_acc[static_cast<std::size_t>(c)];
        if (yes.n < ctx.min_leaf || n - yes.n < ctx.min_leaf) continue;
        double sse_no;
        if (binary) {
          sse_no = cat_acc[static_cast<std::size_t>(observed[1 - oi])]
                       .impurity();
        } else {
          all.subtract_into(yes, complement);
          sse_no = complement.impurity();
        }
        Question q;
        q.feature = f;
        q.is_categorical = true;
        q.category = c;
        consider(q, yes.impurity() + sse_no);
      }
    } else {
      const auto& col = ctx.num_col[fi];
      order = idx;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        double va = col[static_cast<std::size_t>(a)];
        double vb = col[static_cast<std::size_t>(b)];
        if (va != vb) return va < vb;
        return a < b;
      });
      Moments prefix;
      prefix.init(ctx.active.size());
      for (long long p = 1; p < n; ++p) {
        int prev = order[static_cast<std::size_t>(p - 1)];
        prefix.add(ctx.packed[static_cast<std::size_t>(prev)].data());
        double lo = col[static_cast<std::size_t>(prev)];
        double hi = col[static_cast<std::size_t>(
            order[static_cast<std::size_t>(p)])];
        if (lo == hi) continue;
        if (p < ctx.min_leaf || n - p < ctx.min_leaf) continue;
        totals.subtract_into(prefix, complement);
        Question q;
        q.feature = f;
        q.is_categorical = false;
        q.threshold = (lo + hi) * 0.5;
        consider(q, prefix.impurity() + complement.impurity());
      }
    }
  }
  return best;
}

bool question_says_yes(const FeatureSchema& schema, const Question& q,
                       const std::vector<FeatureValue>& features) {
  require(q.feature >= 0 &&
              static_cast<std::size_t>(q.feature) < features.size(),
          ErrorCode::mismatch, "question feature index ", q.feature,
          " outside the feature row");
  const auto& fv = features[static_cast<std::size_t>(q.feature)];
  if (q.is_categorical) {
    require(std::holds_alternative<int>(fv), ErrorCode::mismatch, "feature ",
            schema.at(static_cast<std::size_t>(q.feature)).name,
            ": expected a categorical code");
    return std::get<int>(fv) == q.category;
  }
  require(std::holds_alternative<double>(fv), ErrorCode::mismatch, "feature ",
          schema.at(static_cast<std::size_t>(q.feature)).name,
          ": expected a numeric value");
  return std::get<double>(fv) <= q.threshold;
}

int build_node(const SplitContext& ctx, RegressionTree& tree,
               const std::vector<int>& idx, int depth) {
  auto id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();

  Moments totals = group_moments(ctx, idx);
  std::optional<SplitResult> split;
  if (ctx.max_depth == 0 || depth < ctx.max_depth)
    split = best_split_on(ctx, idx, totals);

  if (!split) {
    std::vector<double> mean(ctx.full_dim, 0.0);
    for (int i : idx)
      kernels::axpy(1.0, (*ctx.samples)[static_cast<std::size_t>(i)]
                             .target.data(),
                    mean.data(), ctx.full_dim);
    for (double& m : mean) m /= double(idx.size());
    tree.nodes[static_cast<std::size_t>(id)].mean = std::move(mean);
    tree.nodes[static_cast<std::size_t>(id)].count =
        static_cast<long long>(idx.size());
    return id;
  }

  std::vector<int> yes_idx, no_idx;
  for (int i : idx) {
    const auto& features = *(*ctx.samples)[static_cast<std::size_t>(i)].features;
    if (question_says_yes(*ctx.schema, split->question, features))
      yes_idx.push_back(i);
    else
      no_idx.push_back(i);
  }

  tree.nodes[static_cast<std::size_t>(id)].question = split->question;
  int yes_id = build_node(ctx, tree, yes_idx, depth + 1);
  int no_id = build_node(ctx, tree, no_idx, depth + 1);
  tree.nodes[static_cast<std::size_t>(id)].yes = yes_id;
  tree.nodes[static_cast<std::size_t>(id)].no = no_id;
  return id;
}

}  // namespace

std::optional<Question> best_split(const FeatureSchema& schema,
                                   const std::vector<Sample>& samples,
                                   const TreeConfig& config) {
  SplitContext ctx = make_context(schema, samples, config, nullptr);
  std::vector<int> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  Moments totals = group_moments(ctx, idx);
  auto result = best_split_on(ctx, idx, totals);
  if (!result) return std::nullopt;
  return result->question;
}

RegressionTree train_tree(const FeatureSchema& schema,
                          const std::vector<Sample>& samples,
                          const TreeConfig& config) {
  SplitContext ctx = make_context(schema, samples, config, nullptr);
  RegressionTree tree;
  tree.target_dim = static_cast<int>(ctx.full_dim);
  std::vector<int> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  build_node(ctx, tree, idx, 0);
  return tree;
}

const std::vector<double>& predict_tree(
    const RegressionTree& tree, const std::vector<FeatureValue>& features) {
  require(!tree.nodes.empty(), ErrorCode::mismatch, "empty tree");
  const TreeNode* node = &tree.nodes[0];
  while (!node->is_leaf()) {
    const Question& q = node->question;
    bool yes = false;
    const auto& fv = features[static_cast<std::size_t>(q.feature)];
    if (q.is_categorical)
      yes = std::holds_alternative<int>(fv) && std::get<int>(fv) == q.category;
    else
      yes = std::holds_alternative<double>(fv) &&
            std::get<double>(fv) <= q.threshold;
    node = &tree.nodes[static_cast<std::size_t>(yes ? node->yes : node->no)];
  }
  return node->mean;
}

namespace {

std::string dim_key(int d) { return "dim" + std::to_string(d); }
std::string tone_key(int t) { return "tone" + std::to_string(t); }

// Per-syllable training targets in the base+delta layout, plus the shapems
// (mean, std) pairs when applicable.
struct UttTargets {
  std::vector<std::vector<double>> target;  // base then delta
  std::vector<std::vector<double>> aux;
};

UttTargets utterance_targets(const RepresentationSpec& repr,
                             const corpus::UtteranceRecord& utt) {
  UttTargets out;
  std::size_t n = utt.syllables.size();
  std::vector<std::vector<double>> bases(n);
  out.aux.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    bases[i] = contour::encode_base(repr, utt.syllables[i].contour,
                                    &out.aux[i]);
  auto deltas = contour::sequence_deltas(repr, bases);
  out.target.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.target[i] = std::move(bases[i]);
    out.target[i].insert(out.target[i].end(), deltas[i].begin(),
                         deltas[i].end());
  }
  return out;
}

// Phrase curve fitting for the phrase-level architecture: the concatenated
// syllable contours of one phrase reduced to 3 orthonormal DCT
// coefficients.
std::vector<double> phrase_coeffs(const corpus::UtteranceRecord& utt,
                                  const corpus::PhraseSpan& span) {
  std::vector<double> concat;
  concat.reserve(static_cast<std::size_t>(span.end - span.start) *
                 kContourPoints);
  for (int s = span.start; s < span.end; ++s)
    concat.insert(concat.end(),
                  utt.syllables[static_cast<std::size_t>(s)].contour.begin(),
                  utt.syllables[static_cast<std::size_t>(s)].contour.end());
  return contour::dct_encode_n(concat, kPhraseDctCoeffs);
}

// Active impurity dimensions for a tree whose targets start with the base
// representation block: every target dimension except the hidden base ones.
std::vector<int> mask_to_active(std::size_t target_dim, std::size_t base_dim,
                                const std::vector<int>& hidden_base) {
  if (hidden_base.empty()) return {};
  std::vector<bool> hide(target_dim, false);
  for (int d : hidden_base)
    if (d >= 0 && static_cast<std::size_t>(d) < base_dim)
      hide[static_cast<std::size_t>(d)] = true;
  std::vector<int> active;
  for (std::size_t d = 0; d < target_dim; ++d)
    if (!hide[d]) active.push_back(static_cast<int>(d));
  return active;
}

TreeConfig masked_config(const TreeConfig& base_config, std::size_t target_dim,
                         std::size_t base_dim,
                         const std::vector<int>& hidden_base) {
  TreeConfig c = base_config;
  c.active_outputs = mask_to_active(target_dim, base_dim, hidden_base);
  return c;
}

TreeConfig plain_config(const TreeConfig& base_config) {
  TreeConfig c = base_config;
  c.active_outputs.clear();
  return c;
}

// The output mask of a model-level TreeConfig names base representation
// dimensions; per-tree active sets are derived from it here.
DTModel train_dt_model_impl(const ArchitectureSpec& arch,
                            const corpus::Corpus& train,
                            const TreeConfig& config,
                            const std::vector<int>& hidden_base_outputs) {
  arch.validate();
  train.validate();
  require(!train.utterances.empty(), ErrorCode::invalid_config,
          "cannot train on an empty corpus");

  const RepresentationSpec& repr = arch.representation;
  auto base_dim = static_cast<std::size_t>(repr.base_dim());
  auto target_dim = static_cast<std::size_t>(repr.base_dim() +
                                             repr.delta_dim());

  DTModel model;
  model.spec = arch;
  model.schema = train.schema;
  model.tone_inventory = train.tone_inventory;

  bool shape = repr.base == BaseKind::shapems;
  TreeConfig main_cfg =
      masked_config(config, target_dim, base_dim, hidden_base_outputs);
  TreeConfig aux_cfg = plain_config(config);

  switch (arch.kind) {
    case ArchKind::sindt:
    case ArchKind::tonedt: {
      std::vector<Sample> all;
      std::vector<Sample> aux_all;
      std::vector<int> tones;
      for (const auto& utt : train.utterances) {
        UttTargets t = utterance_targets(repr, utt);
        for (std::size_t s = 0; s < utt.syllables.size(); ++s) {
          all.push_back(Sample{&utt.syllables[s].features,
                               std::move(t.target[s])});
          if (shape)
            aux_all.push_back(
                Sample{&utt.syllables[s].features, std::move(t.aux[s])});
          tones.push_back(utt.syllables[s].tone);
        }
      }

      auto train_role = [&](const std::string& role,
                            const std::vector<Sample>& main_samples,
                            const std::vector<Sample>& aux_samples) {
        if (shape) {
          model.trees[role + ":shape"] =
              train_tree(model.schema, main_samples, main_cfg);
          model.trees[role + ":meanstd"] =
              train_tree(model.schema, aux_samples, aux_cfg);
        } else {
          model.trees[role] = train_tree(model.schema, main_samples, main_cfg);
        }
      };

      if (arch.kind == ArchKind::sindt) {
        if (shape) {
          model.trees["shape"] = train_tree(model.schema, all, main_cfg);
          model.trees["meanstd"] = train_tree(model.schema, aux_all, aux_cfg);
        } else {
          model.trees["main"] = train_tree(model.schema, all, main_cfg);
        }
        break;
      }

      train_role("pooled", all, aux_all);
      std::vector<int> distinct = tones;
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()),
                     distinct.end());
      for (int t : distinct) {
        std::vector<Sample> part, aux_part;
        for (std::size_t i = 0; i < all.size(); ++i) {
          if (tones[i] != t) continue;
          part.push_back(all[i]);
          if (shape) aux_part.push_back(aux_all[i]);
        }
        // Rare tones fall through to the pooled tree instead of producing
        // leaves below the minimum occupancy.
        if (static_cast<int>(part.size()) < config.min_leaf) continue;
        train_role(tone_key(t), part, aux_part);
      }
      break;
    }

    case ArchKind::scalardt: {
      std::vector<std::vector<Sample>> per_dim(target_dim);
      for (const auto& utt : train.utterances) {
        UttTargets t = utterance_targets(repr, utt);
        for (std::size_t s = 0; s < utt.syllables.size(); ++s)
          for (std::size_t d = 0; d < target_dim; ++d)
            per_dim[d].push_back(Sample{&utt.syllables[s].features,
                                        {t.target[s][d]}});
      }
      TreeConfig scalar_cfg = plain_config(config);
      for (std::size_t d = 0; d < target_dim; ++d)
        model.trees[dim_key(static_cast<int>(d))] =
            train_tree(model.schema, per_dim[d], scalar_cfg);
      break;
    }

    case ArchKind::pslevel: {
      std::vector<int> phrase_features;
      for (std::size_t f = 0; f < model.schema.size(); ++f)
        if (model.schema.at(f).level == corpus::FeatureLevel::phrase)
          phrase_features.push_back(static_cast<int>(f));
      require(!phrase_features.empty(), ErrorCode::invalid_config,
              "schema has no phrase-level features for the phrase tree");

      std::vector<Sample> phrase_samples;
      std::vector<Sample> syl_samples;
      for (const auto& utt : train.utterances) {
        std::vector<Contour> residuals(utt.syllables.size());
        for (const auto& span : utt.phrases) {
          auto coeffs = phrase_coeffs(utt, span);
          phrase_samples.push_back(
              Sample{&utt.syllables[static_cast<std::size_t>(span.start)]
                          .features,
                     coeffs});
          auto curve = contour::dct_decode_n(
              coeffs,
              (span.end - span.start) * kContourPoints);
          for (int s = span.start; s < span.end; ++s) {
            auto si = static_cast<std::size_t>(s);
            for (int i = 0; i < kContourPoints; ++i)
              residuals[si][static_cast<std::size_t>(i)] =
                  utt.syllables[si].contour[static_cast<std::size_t>(i)] -
                  curve[static_cast<std::size_t>((s - span.start) *
                                                 kContourPoints + i)];
          }
        }
        std::vector<std::vector<double>> bases(utt.syllables.size());
        for (std::size_t s = 0; s < utt.syllables.size(); ++s)
          bases[s] = contour::encode_base(repr, residuals[s], nullptr);
        auto deltas = contour::sequence_deltas(repr, bases);
        for (std::size_t s = 0; s < utt.syllables.size(); ++s) {
          std::vector<double> target = std::move(bases[s]);
          target.insert(target.end(), deltas[s].begin(), deltas[s].end());
          syl_samples.push_back(
              Sample{&utt.syllables[s].features, std::move(target)});
        }
      }

      TreeConfig phrase_cfg = plain_config(config);
      if (!config.active_features.empty()) {
        std::vector<int> keep;
        for (int f : phrase_features)
          if (std::find(config.active_features.begin(),
                        config.active_features.end(),
                        f) != config.active_features.end())
            keep.push_back(f);
        phrase_cfg.active_features = keep.empty() ? phrase_features : keep;
      } else {
        phrase_cfg.active_features = phrase_features;
      }
      model.trees["phrase"] =
          train_tree(model.schema, phrase_samples, phrase_cfg);
      model.trees["syl"] = train_tree(model.schema, syl_samples, main_cfg);
      break;
    }
  }
  return model;
}

Contour decode_prediction(const RepresentationSpec& repr,
                          const std::vector<double>& main_pred,
                          const std::vector<double>* aux_pred) {
  contour::EncodedSample s;
  auto base_dim = static_cast<std::size_t>(repr.base_dim());
  require(main_pred.size() >= base_dim, ErrorCode::mismatch,
          "prediction has ", main_pred.size(), " values, representation ",
          repr.describe(), " needs at least ", base_dim);
  s.v.assign(main_pred.begin(),
             main_pred.begin() + static_cast<std::ptrdiff_t>(base_dim));
  if (repr.base == BaseKind::shapems) {
    require(aux_pred && aux_pred->size() == 2, ErrorCode::mismatch,
            "shape prediction is missing its (mean, std) pair");
    s.aux = *aux_pred;
  }
  return contour::decode_sample(repr, s);
}

const RegressionTree& tree_for(const DTModel& model, const std::string& key) {
  auto it = model.trees.find(key);
  require(it != model.trees.end(), ErrorCode::mismatch, "model has no '", key,
          "' tree");
  return it->second;
}

}  // namespace

DTModel train_dt_model(const ArchitectureSpec& arch, const corpus::Corpus& train,
                       const TreeConfig& config) {
  TreeConfig c = config;
  std::vector<int> hidden;
  if (!config.active_outputs.empty()) {
    // Model-level output masks name base dimensions; invert to hidden set.
    std::vector<bool> active(static_cast<std::size_t>(
                                 arch.representation.base_dim()),
                             false);
    for (int d : config.active_outputs)
      if (d >= 0 &&
          static_cast<std::size_t>(d) < active.size())
        active[static_cast<std::size_t>(d)] = true;
    for (std::size_t d = 0; d < active.size(); ++d)
      if (!active[d]) hidden.push_back(static_cast<int>(d));
  }
  c.active_outputs.clear();
  return train_dt_model_impl(arch, train, c, hidden);
}

std::vector<Contour> predict_dt_model(const DTModel& model,
                                      const corpus::UtteranceRecord& utt) {
  const RepresentationSpec& repr = model.spec.representation;
  bool shape = repr.base == BaseKind::shapems;
  std::vector<Contour> out(utt.syllables.size());

  switch (model.spec.kind) {
    case ArchKind::sindt:
    case ArchKind::tonedt: {
      for (std::size_t s = 0; s < utt.syllables.size(); ++s) {
        const auto& features = utt.syllables[s].features;
        std::string role = "main";
        if (model.spec.kind == ArchKind::tonedt) {
          role = tone_key(utt.syllables[s].tone);
          const std::string& probe = shape ? role + ":shape" : role;
          if (model.trees.find(probe) == model.trees.end()) role = "pooled";
        } else if (shape) {
          role = "";
        }
        if (shape) {
          std::string prefix = role.empty() ? "" : role + ":";
          const auto& main_pred =
              predict_tree(tree_for(model, prefix + "shape"), features);
          const auto& aux_pred =
              predict_tree(tree_for(model, prefix + "meanstd"), features);
          out[s] = decode_prediction(repr, main_pred, &aux_pred);
        } else {
          out[s] = decode_prediction(repr, predict_tree(tree_for(model, role),
                                                        features),
                                     nullptr);
        }
      }
      break;
    }

    case ArchKind::scalardt: {
      auto base_dim = static_cast<std::size_t>(repr.base_dim());
      for (std::size_t s = 0; s < utt.syllables.size(); ++s) {
        std::vector<double> pred(base_dim);
        for (std::size_t d = 0; d < base_dim; ++d) {
          const auto& scalar = predict_tree(
              tree_for(model, dim_key(static_cast<int>(d))),
              utt.syllables[s].features);
          pred[d] = scalar[0];
        }
        out[s] = decode_prediction(repr, pred, nullptr);
      }
      break;
    }

    case ArchKind::pslevel: {
      const auto& phrase_tree = tree_for(model, "phrase");
      const auto& syl_tree = tree_for(model, "syl");
      for (const auto& span : utt.phrases) {
        const auto& coeffs = predict_tree(
            phrase_tree,
            utt.syllables[static_cast<std::size_t>(span.start)].features);
        auto curve = contour::dct_decode_n(
            coeffs, (span.end - span.start) * kContourPoints);
        for (int s = span.start; s < span.end; ++s) {
          auto si = static_cast<std::size_t>(s);
          Contour residual = decode_prediction(
              repr, predict_tree(syl_tree, utt.syllables[si].features),
              nullptr);
          for (int i = 0; i < kContourPoints; ++i)
            out[si][static_cast<std::size_t>(i)] =
                curve[static_cast<std::size_t>((s - span.start) *
                                               kContourPoints + i)] +
                residual[static_cast<std::size_t>(i)];
        }
      }
      break;
    }
  }
  return out;
}

ForestModel train_forest(const ArchitectureSpec& arch,
                         const corpus::Corpus& train,
                         const ForestConfig& config) {
  arch.validate();
  require(config.n_trees >= 1, ErrorCode::invalid_config,
          "forest needs at least 1 tree");
  require(config.feature_ignore_fraction >= 0.0 &&
              config.feature_ignore_fraction < 1.0,
          ErrorCode::invalid_config,
          "feature_ignore_fraction must be in [0, 1)");
  require(config.output_ignore_fraction >= 0.0 &&
              config.output_ignore_fraction < 1.0,
          ErrorCode::invalid_config,
          "output_ignore_fraction must be in [0, 1)");
  auto n_features = static_cast<int>(train.schema.size());
  require(n_features >= 2, ErrorCode::invalid_config,
          "forest training needs at least 2 features, schema has ",
          n_features);

  ForestModel forest;
  forest.spec = arch;
  forest.schema = train.schema;
  forest.tone_inventory = train.tone_inventory;
  forest.seed = config.seed;

  int base_dim = arch.representation.base_dim();
  auto n_hidden_features = static_cast<int>(
      std::llround(config.feature_ignore_fraction * n_features));
  auto n_hidden_outputs = static_cast<int>(
      std::llround(config.output_ignore_fraction * base_dim));
  n_hidden_features = std::min(n_hidden_features, n_features - 1);
  n_hidden_outputs = std::min(n_hidden_outputs, base_dim - 1);

  // All masks are drawn up front, in member order, so they depend only on
  // the seed and not on any training schedule.
  std::mt19937_64 rng(config.seed);
  auto draw = [&rng](int count, int out_of) {
    std::vector<int> pool(static_cast<std::size_t>(out_of));
    for (int i = 0; i < out_of; ++i) pool[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < count; ++i) {
      std::uniform_int_distribution<int> pick(i, out_of - 1);
      std::swap(pool[static_cast<std::size_t>(i)],
                pool[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<int> chosen(pool.begin(), pool.begin() + count);
    std::sort(chosen.begin(), chosen.end());
    return chosen;
  };
  for (int m = 0; m < config.n_trees; ++m) {
    MemberMasks masks;
    masks.hidden_features = draw(n_hidden_features, n_features);
    masks.hidden_outputs = draw(n_hidden_outputs, base_dim);
    forest.masks.push_back(std::move(masks));
  }

  for (int m = 0; m < config.n_trees; ++m) {
    const MemberMasks& masks = forest.masks[static_cast<std::size_t>(m)];
    TreeConfig tree_cfg = config.tree;
    tree_cfg.active_outputs.clear();
    std::vector<bool> hidden(static_cast<std::size_t>(n_features), false);
    for (int f : masks.hidden_features)
      hidden[static_cast<std::size_t>(f)] = true;
    tree_cfg.active_features.clear();
    for (int f = 0; f < n_features; ++f)
      if (!hidden[static_cast<std::size_t>(f)])
        tree_cfg.active_features.push_back(f);
    forest.members.push_back(
        train_dt_model_impl(arch, train, tree_cfg, masks.hidden_outputs));
  }
  return forest;
}

std::vector<Contour> predict_forest(const ForestModel& forest,
                                    const corpus::UtteranceRecord& utt) {
  require(!forest.members.empty(), ErrorCode::mismatch, "empty forest");
  std::vector<Contour> sum(utt.syllables.size(), Contour{});
  for (const auto& member : forest.members) {
    auto pred = predict_dt_model(member, utt);
    for (std::size_t s = 0; s < pred.size(); ++s)
      for (int i = 0; i < kContourPoints; ++i)
        sum[s][static_cast<std::size_t>(i)] +=
            pred[s][static_cast<std::size_t>(i)];
  }
  double scale = 1.0 / double(forest.members.size());
  for (auto& c : sum)
    for (double& v : c) v *= scale;
  return sum;
}

namespace {

void write_repr(const RepresentationSpec& repr, std::ostream& out) {
  out << "repr " << contour::base_name(repr.base) << " " << repr.dct_k << " "
      << contour::delta_name(repr.delta) << "\n";
}

RepresentationSpec read_repr(textio::Reader& reader) {
  reader.expect("repr");
  RepresentationSpec repr;
  repr.base = contour::base_from_name(reader.next_word("base representation"));
  repr.dct_k = static_cast<int>(reader.next_int("dct coefficient count"));
  repr.delta = contour::delta_from_name(reader.next_word("delta kind"));
  repr.validate();
  return repr;
}

void write_tree(const std::string& key, const RegressionTree& tree,
                const FeatureSchema& schema, std::ostream& out) {
  out << "tree " << key << " dim " << tree.target_dim << " nodes "
      << tree.nodes.size() << "\n";
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) {
      out << "node leaf " << node.count;
      for (double v : node.mean) out << " " << textio::format_double(v);
      out << "\n";
    } else {
      const auto& def =
          schema.at(static_cast<std::size_t>(node.question.feature));
      out << "node q " << def.name;
      if (node.question.is_categorical)
        out << " cat "
            << schema.value_name(
                   static_cast<std::size_t>(node.question.feature),
                   node.question.category);
      else
        out << " num " << textio::format_double(node.question.threshold);
      out << " " << node.yes << " " << node.no << "\n";
    }
  }
}

RegressionTree read_tree(textio::Reader& reader, const FeatureSchema& schema,
                         std::string* key_out) {
  reader.expect("tree");
  *key_out = reader.next_word("tree key");
  reader.expect("dim");
  RegressionTree tree;
  tree.target_dim = static_cast<int>(reader.next_int("target dimension"));
  if (tree.target_dim < 1) reader.fail("bad target dimension");
  reader.expect("nodes");
  long long n_nodes = reader.next_int("node count");
  if (n_nodes < 1) reader.fail("tree must have at least one node");
  for (long long i = 0; i < n_nodes; ++i) {
    reader.expect("node");
    std::string kind = reader.next_word("node kind");
    TreeNode node;
    if (kind == "leaf") {
      node.count = reader.next_int("leaf sample count");
      node.mean.resize(static_cast<std::size_t>(tree.target_dim));
      for (auto& v : node.mean) v = reader.next_double("leaf mean value");
    } else if (kind == "q") {
      std::string fname = reader.next_word("question feature");
      int fi = schema.index_of(fname);
      if (fi < 0)
        reader.fail_at(ErrorCode::mismatch, "question feature '", fname,
                       "' not in the schema");
      node.question.feature = fi;
      std::string qkind = reader.next_word("question kind");
      if (qkind == "cat") {
        node.question.is_categorical = true;
        std::string value = reader.next_word("question value");
        int code =
            schema.value_code(static_cast<std::size_t>(fi), value);
        if (code < 0)
          reader.fail_at(ErrorCode::mismatch, "question value '", value,
                         "' not in feature '", fname, "'");
        node.question.category = code;
      } else if (qkind == "num") {
        node.question.is_categorical = false;
        node.question.threshold = reader.next_double("question threshold");
      } else {
        reader.fail("unknown question kind '", qkind, "'");
      }
      node.yes = static_cast<int>(reader.next_int("yes child"));
      node.no = static_cast<int>(reader.next_int("no child"));
      if (node.yes <= static_cast<int>(i) || node.no <= static_cast<int>(i) ||
          node.yes >= n_nodes || node.no >= n_nodes)
        reader.fail("node ", i, ": child ids out of order");
    } else {
      reader.fail("unknown node kind '", kind, "'");
    }
    tree.nodes.push_back(std::move(node));
  }
  return tree;
}

void write_dt_body(const DTModel& model, std::ostream& out) {
  out << "arch " << arch_name(model.spec.kind) << "\n";
  write_repr(model.spec.representation, out);
  corpus::write_schema_block(model.schema, model.tone_inventory, out);
  out << "trees " << model.trees.size() << "\n";
  for (const auto& [key, tree] : model.trees)
    write_tree(key, tree, model.schema, out);
}

DTModel read_dt_body(textio::Reader& reader) {
  DTModel model;
  reader.expect("arch");
  model.spec.kind = arch_from_name(reader.next_word("architecture"));
  model.spec.representation = read_repr(reader);
  model.spec.validate();
  auto [schema, tones] = corpus::read_schema_block(reader);
  model.schema = std::move(schema);
  model.tone_inventory = std::move(tones);
  reader.expect("trees");
  long long n_trees = reader.next_int("tree count");
  if (n_trees < 1) reader.fail("model must have at least one tree");
  for (long long i = 0; i < n_trees; ++i) {
    std::string key;
    RegressionTree tree = read_tree(reader, model.schema, &key);
    if (!model.trees.emplace(std::move(key), std::move(tree)).second)
      reader.fail("duplicate tree key");
  }
  return model;
}

void write_masks(const MemberMasks& masks, std::ostream& out) {
  out << "hidden_features " << masks.hidden_features.size();
  for (int f : masks.hidden_features) out << " " << f;
  out << "\nhidden_outputs " << masks.hidden_outputs.size();
  for (int d : masks.hidden_outputs) out << " " << d;
  out << "\n";
}

MemberMasks read_masks(textio::Reader& reader) {
  MemberMasks masks;
  reader.expect("hidden_features");
  long long nf = reader.next_int("hidden feature count");
  for (long long i = 0; i < nf; ++i)
    masks.hidden_features.push_back(
        static_cast<int>(reader.next_int("hidden feature index")));
  reader.expect("hidden_outputs");
  long long no = reader.next_int("hidden output count");
  for (long long i = 0; i < no; ++i)
    masks.hidden_outputs.push_back(
        static_cast<int>(reader.next_int("hidden output index")));
  return masks;
}

}  // namespace

void save_dt_model(const DTModel& model, const std::string& path) {
  auto out = textio::open_output(path);
  out << "F0LAB-DT v1\n";
  out << "kind dt\n";
  write_dt_body(model, out);
  require(out.good(), ErrorCode::io, "failed writing ", path);
}

DTModel load_dt_model(const std::string& path) {
  auto in = textio::open_input(path);
  textio::Reader reader(in, path);
  reader.expect_header("F0LAB-DT", "v1");
  reader.expect("kind");
  std::string kind = reader.next_word("model kind");
  if (kind != "dt")
    reader.fail_at(ErrorCode::mismatch, "expected a single model file, got '",
                   kind, "'");
  return read_dt_body(reader);
}

void save_forest(const ForestModel& forest, const std::string& path) {
  auto out = textio::open_output(path);
  out << "F0LAB-DT v1\n";
  out << "kind forest\n";
  out << "arch " << arch_name(forest.spec.kind) << "\n";
  write_repr(forest.spec.representation, out);
  corpus::write_schema_block(forest.schema, forest.tone_inventory, out);
  out << "seed " << forest.seed << "\n";
  out << "members " << forest.members.size() << "\n";
  for (std::size_t m = 0; m < forest.members.size(); ++m) {
    out << "member " << m << "\n";
    write_masks(forest.masks[m], out);
    out << "trees " << forest.members[m].trees.size() << "\n";
    for (const auto& [key, tree] : forest.members[m].trees)
      write_tree(key, tree, forest.schema, out);
  }
  require(out.good(), ErrorCode::io, "failed writing ", path);
}

ForestModel load_forest(const std::string& path) {
  auto in = textio::open_input(path);
  textio::Reader reader(in, path);
  reader.expect_header("F0LAB-DT", "v1");
  reader.expect("kind");
  std::string kind = reader.next_word("model kind");
  if (kind != "forest")
    reader.fail_at(ErrorCode::mismatch, "expected a forest file, got '", kind,
                   "'");

  ForestModel forest;
  reader.expect("arch");
  forest.spec.kind = arch_from_name(reader.next_word("architecture"));
  forest.spec.representation = read_repr(reader);
  forest.spec.validate();
  auto [schema, tones] = corpus::read_schema_block(reader);
  forest.schema = std::move(schema);
  forest.tone_inventory = std::move(tones);
  reader.expect("seed");
  forest.seed = static_cast<std::uint64_t>(reader.next_int("forest seed"));
  reader.expect("members");
  long long n_members = reader.next_int("member count");
  if (n_members < 1) reader.fail("forest must have at least one member");
  for (long long m = 0; m < n_members; ++m) {
    reader.expect("member");
    long long got = reader.next_int("member index");
    if (got != m) reader.fail("member ", m, " has index ", got);
    forest.masks.push_back(read_masks(reader));

    DTModel member;
    member.spec = forest.spec;
    member.schema = forest.schema;
    member.tone_inventory = forest.tone_inventory;
    reader.expect("trees");
    long long n_trees = reader.next_int("tree count");
    if (n_trees < 1) reader.fail("member must have at least one tree");
    for (long long i = 0; i < n_trees; ++i) {
      std::string key;
      RegressionTree tree = read_tree(reader, member.schema, &key);
      if (!member.trees.emplace(std::move(key), std::move(tree)).second)
        reader.fail("duplicate tree key");
    }
    forest.members.push_back(std::move(member));
  }
  return forest;
}

bool model_file_is_forest(const std::string& path) {
  auto in = textio::open_input(path);
  textio::Reader reader(in, path);
  reader.expect_header("F0LAB-DT", "v1");
  reader.expect("kind");
  return reader.next_word("model kind") == "forest";
}

}  // namespace f0lab::cart
