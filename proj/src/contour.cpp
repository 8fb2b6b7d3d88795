#include "f0lab/contour.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "f0lab/error.hpp"

namespace f0lab::contour {

const char* base_name(BaseKind base) {
  switch (base) {
    case BaseKind::orif0: return "orif0";
    case BaseKind::dct: return "dct";
    case BaseKind::shapems: return "shapems";
  }
  raise(ErrorCode::invalid_config, "bad base representation value");
}

BaseKind base_from_name(const std::string& name) {
  if (name == "orif0") return BaseKind::orif0;
  if (name == "dct") return BaseKind::dct;
  if (name == "shapems") return BaseKind::shapems;
  raise(ErrorCode::invalid_config, "unknown representation '", name,
        "', expected orif0, dct or shapems");
}

const char* delta_name(DeltaKind delta) {
  switch (delta) {
    case DeltaKind::none: return "none";
    case DeltaKind::in_delta: return "in";
    case DeltaKind::cross_delta: return "cross";
  }
  raise(ErrorCode::invalid_config, "bad delta kind value");
}

DeltaKind delta_from_name(const std::string& name) {
  if (name == "none") return DeltaKind::none;
  if (name == "in") return DeltaKind::in_delta;
  if (name == "cross") return DeltaKind::cross_delta;
  raise(ErrorCode::invalid_config, "unknown delta kind '", name,
        "', expected none, in or cross");
}

int RepresentationSpec::base_dim() const {
  return base == BaseKind::dct ? dct_k : kContourPoints;
}

int RepresentationSpec::delta_dim() const {
  switch (delta) {
    case DeltaKind::none: return 0;
    case DeltaKind::in_delta: return base_dim() - 1;
    case DeltaKind::cross_delta: return 2 * base_dim();
  }
  return 0;
}

int RepresentationSpec::aux_dim() const {
  return base == BaseKind::shapems ? 2 : 0;
}

void RepresentationSpec::validate() const {
  if (base == BaseKind::dct)
    require(dct_k >= 1 && dct_k <= kContourPoints, ErrorCode::invalid_config,
            "dct coefficient count ", dct_k, " outside [1, ", kContourPoints,
            "]");
}

std::string RepresentationSpec::describe() const {
  std::string s = base_name(base);
  if (base == BaseKind::dct) s += std::to_string(dct_k);
  if (delta != DeltaKind::none) s += std::string("+") + delta_name(delta);
  return s;
}

Contour subsample_contour(const std::vector<Frame>& frames) {
  require(!frames.empty(), ErrorCode::invalid_config,
          "cannot subsample an empty frame list");
  std::size_t n = frames.size();

  std::vector<double> filled(n);
  std::size_t first_voiced = n, last_voiced = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (frames[i].voiced) {
      if (first_voiced == n) first_voiced = i;
      last_voiced = i;
    }
  }
  require(first_voiced != n, ErrorCode::invalid_config,
          "cannot subsample a contour with no voiced frames");

  for (std::size_t i = 0; i < n; ++i) {
    if (frames[i].voiced) {
      filled[i] = frames[i].f0_hz;
    } else if (i < first_voiced) {
      filled[i] = frames[first_voiced].f0_hz;
    } else if (i > last_voiced) {
      filled[i] = frames[last_voiced].f0_hz;
    } else {
      std::size_t lo = i, hi = i;
      while (!frames[lo].voiced) --lo;
      while (!frames[hi].voiced) ++hi;
      double w = double(i - lo) / double(hi - lo);
      filled[i] = frames[lo].f0_hz * (1.0 - w) + frames[hi].f0_hz * w;
    }
  }

  Contour out{};
  for (int k = 0; k < kContourPoints; ++k) {
    double x = n == 1 ? 0.0
                      : double(k) * double(n - 1) / double(kContourPoints - 1);
    auto lo = static_cast<std::size_t>(std::floor(x));
    std::size_t hi = std::min(lo + 1, n - 1);
    double w = x - double(lo);
    out[static_cast<std::size_t>(k)] =
        filled[lo] * (1.0 - w) + filled[hi] * w;
  }
  return out;
}

std::vector<double> dct_encode_n(const std::vector<double>& v, int k) {
  auto n = static_cast<int>(v.size());
  require(n >= 1, ErrorCode::invalid_config, "empty vector for dct");
  require(k >= 1 && k <= n, ErrorCode::invalid_config,
          "dct coefficient count ", k, " outside [1, ", n, "]");
  std::vector<double> coeffs(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      acc += v[static_cast<std::size_t>(i)] *
             std::cos(std::numbers::pi * (2 * i + 1) * j / (2.0 * n));
    double scale = j == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    coeffs[static_cast<std::size_t>(j)] = scale * acc;
  }
  return coeffs;
}

std::vector<double> dct_decode_n(const std::vector<double>& coeffs, int n) {
  auto k = static_cast<int>(coeffs.size());
  require(n >= 1, ErrorCode::invalid_config, "bad dct output length ", n);
  require(k >= 1 && k <= n, ErrorCode::invalid_config,
          "dct coefficient count ", k, " outside [1, ", n, "]");
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < k; ++j) {
      double scale = j == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      acc += scale * coeffs[static_cast<std::size_t>(j)] *
             std::cos(std::numbers::pi * (2 * i + 1) * j / (2.0 * n));
    }
    v[static_cast<std::size_t>(i)] = acc;
  }
  return v;
}

std::vector<double> dct_encode(const Contour& v, int k) {
  return dct_encode_n(std::vector<double>(v.begin(), v.end()), k);
}

Contour dct_decode(const std::vector<double>& coeffs) {
  std::vector<double> v = dct_decode_n(coeffs, kContourPoints);
  Contour out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

ShapeMS shapems_encode(const Contour& v) {
  ShapeMS r;
  double sum = 0.0;
  for (double x : v) sum += x;
  r.mean = sum / kContourPoints;
  double sq = 0.0;
  for (double x : v) sq += (x - r.mean) * (x - r.mean);
  r.std_dev = std::sqrt(sq / kContourPoints);
  double denom = std::max(r.std_dev, kShapeStdFloor);
  for (int i = 0; i < kContourPoints; ++i)
    r.shape[static_cast<std::size_t>(i)] =
        (v[static_cast<std::size_t>(i)] - r.mean) / denom;
  return r;
}

Contour shapems_decode(const Contour& shape, double mean, double std_dev) {
  require(std_dev >= 0.0, ErrorCode::invalid_config,
          "negative standard deviation in shape decode");
  Contour out{};
  for (int i = 0; i < kContourPoints; ++i)
    out[static_cast<std::size_t>(i)] =
        shape[static_cast<std::size_t>(i)] * std_dev + mean;
  return out;
}

std::vector<double> in_delta(const std::vector<double>& v) {
  require(v.size() >= 2, ErrorCode::invalid_config,
          "in-vector delta needs at least 2 values, got ", v.size());
  std::vector<double> d(v.size() - 1);
  for (std::size_t i = 0; i + 1 < v.size(); ++i) d[i] = v[i + 1] - v[i];
  return d;
}

std::vector<double> cross_delta(const std::vector<double>* prev,
                                const std::vector<double>& cur,
                                const std::vector<double>* next) {
  std::size_t d = cur.size();
  require(!prev || prev->size() == d, ErrorCode::mismatch,
          "cross delta dimension mismatch: prev has ", prev ? prev->size() : 0,
          ", cur has ", d);
  require(!next || next->size() == d, ErrorCode::mismatch,
          "cross delta dimension mismatch: next has ", next ? next->size() : 0,
          ", cur has ", d);
  std::vector<double> out(2 * d, 0.0);
  if (prev)
    for (std::size_t i = 0; i < d; ++i) out[i] = cur[i] - (*prev)[i];
  if (next)
    for (std::size_t i = 0; i < d; ++i) out[d + i] = (*next)[i] - cur[i];
  return out;
}

std::vector<double> encode_base(const RepresentationSpec& spec,
                                const Contour& contour,
                                std::vector<double>* aux) {
  switch (spec.base) {
    case BaseKind::orif0:
      return std::vector<double>(contour.begin(), contour.end());
    case BaseKind::dct:
      return dct_encode(contour, spec.dct_k);
    case BaseKind::shapems: {
      ShapeMS r = shapems_encode(contour);
      if (aux) *aux = {r.mean, r.std_dev};
      return std::vector<double>(r.shape.begin(), r.shape.end());
    }
  }
  raise(ErrorCode::invalid_config, "bad base representation value");
}

std::vector<std::vector<double>> sequence_deltas(
    const RepresentationSpec& spec,
    const std::vector<std::vector<double>>& bases) {
  std::vector<std::vector<double>> out(bases.size());
  switch (spec.delta) {
    case DeltaKind::none:
      break;
    case DeltaKind::in_delta:
      for (std::size_t i = 0; i < bases.size(); ++i)
        out[i] = in_delta(bases[i]);
      break;
    case DeltaKind::cross_delta:
      for (std::size_t i = 0; i < bases.size(); ++i)
        out[i] = cross_delta(i > 0 ? &bases[i - 1] : nullptr, bases[i],
                             i + 1 < bases.size() ? &bases[i + 1] : nullptr);
      break;
  }
  return out;
}

EncodedSample encode_sample(const RepresentationSpec& spec,
                            const corpus::UtteranceRecord& utt,
                            int syllable_index) {
  spec.validate();
  auto count = static_cast<int>(utt.syllables.size());
  require(syllable_index >= 0 && syllable_index < count, ErrorCode::mismatch,
          "utterance ", utt.id, ": syllable index ", syllable_index,
          " outside [0, ", count, ")");

  EncodedSample sample;
  sample.v = encode_base(
      spec, utt.syllables[static_cast<std::size_t>(syllable_index)].contour,
      &sample.aux);

  switch (spec.delta) {
    case DeltaKind::none:
      break;
    case DeltaKind::in_delta:
      sample.delta = in_delta(sample.v);
      break;
    case DeltaKind::cross_delta: {
      std::vector<double> prev, next;
      bool has_prev = syllable_index > 0;
      bool has_next = syllable_index + 1 < count;
      if (has_prev)
        prev = encode_base(
            spec,
            utt.syllables[static_cast<std::size_t>(syllable_index - 1)].contour,
            nullptr);
      if (has_next)
        next = encode_base(
            spec,
            utt.syllables[static_cast<std::size_t>(syllable_index + 1)].contour,
            nullptr);
      sample.delta = cross_delta(has_prev ? &prev : nullptr, sample.v,
                                 has_next ? &next : nullptr);
      break;
    }
  }
  return sample;
}

Contour decode_sample(const RepresentationSpec& spec,
                      const EncodedSample& sample) {
  spec.validate();
  require(sample.v.size() == static_cast<std::size_t>(spec.base_dim()),
          ErrorCode::mismatch, "encoded sample has ", sample.v.size(),
          " base values, representation ", spec.describe(), " expects ",
          spec.base_dim());
  switch (spec.base) {
    case BaseKind::orif0: {
      Contour out{};
      std::copy(sample.v.begin(), sample.v.end(), out.begin());
      return out;
    }
    case BaseKind::dct:
      return dct_decode(sample.v);
    case BaseKind::shapems: {
      require(sample.aux.size() == 2, ErrorCode::mismatch,
              "shape sample is missing its (mean, std) pair");
      Contour shape{};
      std::copy(sample.v.begin(), sample.v.end(), shape.begin());
      return shapems_decode(shape, sample.aux[0],
                            std::max(sample.aux[1], 0.0));
    }
  }
  raise(ErrorCode::invalid_config, "bad base representation value");
}

}  // namespace f0lab::contour
