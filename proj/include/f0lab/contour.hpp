#pragma once

#include <string>
#include <vector>

#include "f0lab/corpus.hpp"

namespace f0lab::contour {

using corpus::Contour;
using corpus::kContourPoints;

enum class BaseKind { orif0, dct, shapems };
enum class DeltaKind { none, in_delta, cross_delta };

const char* base_name(BaseKind base);
BaseKind base_from_name(const std::string& name);
const char* delta_name(DeltaKind delta);
DeltaKind delta_from_name(const std::string& name);

// Base representation plus an optional delta block computed over the base
// vector. The delta augments training targets only; decoding ignores it.
struct RepresentationSpec {
  BaseKind base = BaseKind::orif0;
  int dct_k = 5;  // coefficient count when base == dct
  DeltaKind delta = DeltaKind::none;

  int base_dim() const;
  int delta_dim() const;
  int aux_dim() const;  // (mean, std) pair for shapems
  void validate() const;
  std::string describe() const;

  bool operator==(const RepresentationSpec&) const = default;
};

struct EncodedSample {
  std::vector<double> v;      // base vector, dimension base_dim()
  std::vector<double> delta;  // delta block or empty
  std::vector<double> aux;    // {mean, std} for shapems, else empty
};

struct Frame {
  double f0_hz = 0.0;
  bool voiced = false;
};

// Fills unvoiced frames by linear interpolation between the nearest voiced
// neighbors (flat extension at the ends), then samples the filled track at
// 10 equally spaced positions in normalized time.
Contour subsample_contour(const std::vector<Frame>& frames);

// Orthonormal type-II discrete cosine transform and its inverse. Truncated
// coefficient sets decode with the missing terms treated as zero.
std::vector<double> dct_encode(const Contour& v, int k);
Contour dct_decode(const std::vector<double>& coeffs);

// General-length variants (used for whole-phrase contours).
std::vector<double> dct_encode_n(const std::vector<double>& v, int k);
std::vector<double> dct_decode_n(const std::vector<double>& coeffs, int n);

struct ShapeMS {
  Contour shape{};
  double mean = 0.0;
  double std_dev = 0.0;
};

// Per-sample z-score: mean and population standard deviation of the 10
// points; the shape divides by max(std, 1e-6) so flat inputs stay finite.
ShapeMS shapems_encode(const Contour& v);
Contour shapems_decode(const Contour& shape, double mean, double std_dev);

inline constexpr double kShapeStdFloor = 1e-6;

// Differences between adjacent values inside one vector.
std::vector<double> in_delta(const std::vector<double>& v);

// [cur - prev, next - cur]; an absent neighbor contributes a zero block.
std::vector<double> cross_delta(const std::vector<double>* prev,
                                const std::vector<double>& cur,
                                const std::vector<double>* next);

EncodedSample encode_sample(const RepresentationSpec& spec,
                            const corpus::UtteranceRecord& utt,
                            int syllable_index);
Contour decode_sample(const RepresentationSpec& spec,
                      const EncodedSample& sample);

// Base-only encode of one contour, no delta block. For shapems the
// (mean, std) pair lands in *aux when given.
std::vector<double> encode_base(const RepresentationSpec& spec,
                                const Contour& contour,
                                std::vector<double>* aux = nullptr);

// Delta block per position for a sequence of base vectors in utterance
// order; empty blocks when the spec carries no delta.
std::vector<std::vector<double>> sequence_deltas(
    const RepresentationSpec& spec,
    const std::vector<std::vector<double>>& bases);

}  // namespace f0lab::contour
