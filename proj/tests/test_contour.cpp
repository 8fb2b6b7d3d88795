#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "f0lab/contour.hpp"
#include "f0lab/corpus.hpp"
#include "f0lab/error.hpp"

using namespace f0lab;
using contour::BaseKind;
using contour::DeltaKind;
using contour::RepresentationSpec;
using corpus::Contour;

namespace {

Contour random_contour(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(80.0, 320.0);
  Contour c{};
  for (double& v : c) v = dist(rng);
  return c;
}

// Direct cosine-sum transform, written independently of the library code.
std::vector<double> reference_dct(const std::vector<double>& v, int k) {
  int n = static_cast<int>(v.size());
  std::vector<double> out;
  for (int j = 0; j < k; ++j) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      acc += v[i] * std::cos(std::numbers::pi * j * (2.0 * i + 1.0) /
                             (2.0 * n));
    acc *= j == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    out.push_back(acc);
  }
  return out;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

}  // namespace

TEST_CASE("dct matches a naive cosine-sum oracle") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Contour c = random_contour(rng);
    std::vector<double> full(c.begin(), c.end());
    for (int k = 1; k <= 10; ++k) {
      std::vector<double> got = contour::dct_encode(c, k);
      std::vector<double> want = reference_dct(full, k);
      REQUIRE(got.size() == static_cast<std::size_t>(k));
      for (int j = 0; j < k; ++j)
        CHECK(std::fabs(got[j] - want[j]) <= 1e-9);
    }
  }
}

TEST_CASE("dct round-trips at full order and is linear") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Contour c = random_contour(rng);
    Contour back = contour::dct_decode(contour::dct_encode(c, 10));
    for (int i = 0; i < 10; ++i) CHECK(std::fabs(back[i] - c[i]) <= 1e-9);

    Contour d = random_contour(rng);
    std::vector<double> ec = contour::dct_encode(c, 7);
    std::vector<double> ed = contour::dct_encode(d, 7);
    Contour sum{};
    for (int i = 0; i < 10; ++i) sum[i] = c[i] + d[i];
    std::vector<double> es = contour::dct_encode(sum, 7);
    for (int j = 0; j < 7; ++j)
      CHECK(std::fabs(es[j] - ec[j] - ed[j]) <= 1e-9);
  }
}

TEST_CASE("constant contours concentrate in the first dct coefficient") {
  Contour c{};
  c.fill(120.0);
  std::vector<double> coeffs = contour::dct_encode(c, 10);
  CHECK(std::fabs(coeffs[0] - 120.0 * std::sqrt(10.0)) <= 1e-9);
  for (int j = 1; j < 10; ++j) CHECK(std::fabs(coeffs[j]) <= 1e-9);
}

TEST_CASE("general-length dct round-trips on phrase-sized vectors") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-50.0, 50.0);
  for (int n : {1, 2, 3, 17, 30, 64}) {
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    std::vector<double> back =
        contour::dct_decode_n(contour::dct_encode_n(v, n), n);
    for (int i = 0; i < n; ++i) CHECK(std::fabs(back[i] - v[i]) <= 1e-9);
  }
  CHECK(code_of([] { contour::dct_encode_n({1.0, 2.0}, 3); }) ==
        ErrorCode::invalid_config);
  CHECK(code_of([] { contour::dct_encode_n({}, 1); }) ==
        ErrorCode::invalid_config);
}

TEST_CASE("dct coefficient counts outside [1, 10] are rejected") {
  Contour c{};
  CHECK(code_of([&] { contour::dct_encode(c, 0); }) ==
        ErrorCode::invalid_config);
  CHECK(code_of([&] { contour::dct_encode(c, 11); }) ==
        ErrorCode::invalid_config);
  RepresentationSpec spec;
  spec.base = BaseKind::dct;
  spec.dct_k = 0;
  CHECK(code_of([&] { spec.validate(); }) == ErrorCode::invalid_config);
}

TEST_CASE("subsampling a 30-frame ramp lands on the closed form") {
  std::vector<contour::Frame> frames;
  for (int i = 0; i < 30; ++i)
    frames.push_back({100.0 + 90.0 * i / 29.0, true});
  Contour c = contour::subsample_contour(frames);
  for (int k = 0; k < 10; ++k)
    CHECK(std::fabs(c[k] - (100.0 + 10.0 * k)) <= 1e-9);
}

TEST_CASE("unvoiced frames are filled by interpolation and flat ends") {
  std::vector<contour::Frame> frames = {
      {0.0, false}, {0.0, false}, {100.0, true}, {0.0, false},
      {0.0, false}, {160.0, true}, {0.0, false},
  };
  // Filled track: 100 100 100 120 140 160 160.
  Contour c = contour::subsample_contour(frames);
  CHECK(c[0] == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(c[9] == doctest::Approx(160.0).epsilon(1e-12));
  for (int k = 1; k < 10; ++k) CHECK(c[k] >= c[k - 1] - 1e-12);
  // Sample 3 sits at position 3 * 6 / 9 = 2.0, i.e. on the voiced 100 frame.
  CHECK(c[3] == doctest::Approx(100.0).epsilon(1e-12));

  CHECK(code_of([] {
          contour::subsample_contour({{0.0, false}, {0.0, false}});
        }) == ErrorCode::invalid_config);
  CHECK(code_of([] { contour::subsample_contour({}); }) ==
        ErrorCode::invalid_config);
}

TEST_CASE("a single voiced frame spreads flat") {
  Contour c = contour::subsample_contour({{220.0, true}});
  for (double v : c) CHECK(v == doctest::Approx(220.0).epsilon(1e-15));
}

TEST_CASE("monotone frame tracks subsample monotonically") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> step(0.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<contour::Frame> frames;
    double v = 100.0;
    int n = 5 + trial;
    for (int i = 0; i < n; ++i) {
      v += step(rng);
      frames.push_back({v, true});
    }
    Contour c = contour::subsample_contour(frames);
    for (int k = 1; k < 10; ++k) CHECK(c[k] >= c[k - 1] - 1e-12);
  }
}

TEST_CASE("shape normalization recovers hand-computed mean and std") {
  Contour c{};
  for (int i = 0; i < 10; ++i) c[i] = 100.0 + 10.0 * i;
  contour::ShapeMS r = contour::shapems_encode(c);
  CHECK(r.mean == doctest::Approx(145.0).epsilon(1e-12));
  CHECK(r.std_dev == doctest::Approx(std::sqrt(825.0)).epsilon(1e-12));
  double shape_mean = 0.0, shape_sq = 0.0;
  for (double v : r.shape) shape_mean += v;
  shape_mean /= 10.0;
  for (double v : r.shape) shape_sq += (v - shape_mean) * (v - shape_mean);
  CHECK(std::fabs(shape_mean) <= 1e-12);
  CHECK(std::sqrt(shape_sq / 10.0) == doctest::Approx(1.0).epsilon(1e-12));
  Contour back = contour::shapems_decode(r.shape, r.mean, r.std_dev);
  for (int i = 0; i < 10; ++i) CHECK(std::fabs(back[i] - c[i]) <= 1e-9);
}

TEST_CASE("flat contours produce zero shape and zero std") {
  Contour c{};
  c.fill(207.5);
  contour::ShapeMS r = contour::shapems_encode(c);
  CHECK(r.mean == doctest::Approx(207.5).epsilon(1e-15));
  CHECK(r.std_dev == 0.0);
  for (double v : r.shape) CHECK(v == 0.0);
  Contour back = contour::shapems_decode(r.shape, r.mean, r.std_dev);
  for (double v : back) CHECK(v == doctest::Approx(207.5).epsilon(1e-15));
  CHECK(code_of([&] { contour::shapems_decode(r.shape, 100.0, -1.0); }) ==
        ErrorCode::invalid_config);
}

TEST_CASE("shape round-trip across random contours") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Contour c = random_contour(rng);
    contour::ShapeMS r = contour::shapems_encode(c);
    Contour back = contour::shapems_decode(r.shape, r.mean, r.std_dev);
    for (int i = 0; i < 10; ++i) CHECK(std::fabs(back[i] - c[i]) <= 1e-9);
  }
}

TEST_CASE("in-vector deltas difference adjacent values") {
  std::vector<double> d = contour::in_delta({1.0, 2.0, 4.0});
  REQUIRE(d.size() == 2);
  CHECK(d[0] == 1.0);
  CHECK(d[1] == 2.0);
  CHECK(code_of([] { contour::in_delta({1.0}); }) ==
        ErrorCode::invalid_config);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  std::vector<double> v(10);
  for (double& x : v) x = dist(rng);
  std::vector<double> got = contour::in_delta(v);
  for (std::size_t i = 0; i + 1 < v.size(); ++i)
    CHECK(got[i] == v[i + 1] - v[i]);
}

TEST_CASE("cross deltas look at both neighbors with zero edge blocks") {
  std::vector<double> a = {0.0}, b = {1.0}, c = {3.0};
  std::vector<double> mid = contour::cross_delta(&a, b, &c);
  REQUIRE(mid.size() == 2);
  CHECK(mid[0] == 1.0);
  CHECK(mid[1] == 2.0);
  std::vector<double> first = contour::cross_delta(nullptr, a, &b);
  CHECK(first[0] == 0.0);
  CHECK(first[1] == 1.0);
  std::vector<double> last = contour::cross_delta(&b, c, nullptr);
  CHECK(last[0] == 2.0);
  CHECK(last[1] == 0.0);
  std::vector<double> bad = {1.0, 2.0};
  CHECK(code_of([&] { contour::cross_delta(&bad, b, nullptr); }) ==
        ErrorCode::mismatch);
}

TEST_CASE("sequence deltas wire neighbors by position") {
  std::vector<std::vector<double>> bases = {{1.0, 1.0}, {2.0, 0.0},
                                            {4.0, 5.0}};
  RepresentationSpec spec;
  spec.delta = DeltaKind::cross_delta;
  auto blocks = contour::sequence_deltas(spec, bases);
  REQUIRE(blocks.size() == 3);
  CHECK(blocks[0] == std::vector<double>{0.0, 0.0, 1.0, -1.0});
  CHECK(blocks[1] == std::vector<double>{1.0, -1.0, 2.0, 5.0});
  CHECK(blocks[2] == std::vector<double>{2.0, 5.0, 0.0, 0.0});
  spec.delta = DeltaKind::none;
  auto empty = contour::sequence_deltas(spec, bases);
  for (const auto& e : empty) CHECK(e.empty());
}

namespace {

corpus::UtteranceRecord tiny_utterance(const std::vector<Contour>& contours) {
  corpus::UtteranceRecord utt;
  utt.id = "t";
  for (const Contour& c : contours) {
    corpus::SyllableRecord syl;
    syl.contour = c;
    utt.syllables.push_back(syl);
  }
  return utt;
}

}  // namespace

TEST_CASE("sample encoding carries base, aux and delta blocks") {
  std::mt19937_64 rng(7);
  std::vector<Contour> contours = {random_contour(rng), random_contour(rng),
                                   random_contour(rng)};
  corpus::UtteranceRecord utt = tiny_utterance(contours);

  RepresentationSpec spec;
  spec.base = BaseKind::dct;
  spec.dct_k = 5;
  spec.delta = DeltaKind::cross_delta;
  contour::EncodedSample mid = contour::encode_sample(spec, utt, 1);
  CHECK(mid.v.size() == 5);
  CHECK(mid.delta.size() == 10);
  CHECK(mid.aux.empty());
  std::vector<double> prev = contour::dct_encode(contours[0], 5);
  std::vector<double> cur = contour::dct_encode(contours[1], 5);
  std::vector<double> next = contour::dct_encode(contours[2], 5);
  for (int j = 0; j < 5; ++j) {
    CHECK(std::fabs(mid.delta[j] - (cur[j] - prev[j])) <= 1e-12);
    CHECK(std::fabs(mid.delta[5 + j] - (next[j] - cur[j])) <= 1e-12);
  }

  // Decoding ignores the delta block entirely.
  Contour direct = contour::dct_decode(cur);
  Contour decoded = contour::decode_sample(spec, mid);
  contour::EncodedSample stripped = mid;
  stripped.delta.assign(10, 1e9);
  Contour decoded2 = contour::decode_sample(spec, stripped);
  for (int i = 0; i < 10; ++i) {
    CHECK(std::fabs(decoded[i] - direct[i]) <= 1e-12);
    CHECK(decoded[i] == decoded2[i]);
  }
}

TEST_CASE("shape samples decode through the aux pair") {
  std::mt19937_64 rng(8);
  Contour c = random_contour(rng);
  corpus::UtteranceRecord utt = tiny_utterance({c});
  RepresentationSpec spec;
  spec.base = BaseKind::shapems;
  spec.delta = DeltaKind::in_delta;
  contour::EncodedSample s = contour::encode_sample(spec, utt, 0);
  CHECK(s.v.size() == 10);
  CHECK(s.delta.size() == 9);
  REQUIRE(s.aux.size() == 2);
  Contour back = contour::decode_sample(spec, s);
  for (int i = 0; i < 10; ++i) CHECK(std::fabs(back[i] - c[i]) <= 1e-9);

  // A slightly negative predicted std is clamped at decode time.
  contour::EncodedSample clipped = s;
  clipped.aux[1] = -1e-9;
  Contour flat = contour::decode_sample(spec, clipped);
  for (int i = 0; i < 10; ++i)
    CHECK(flat[i] == doctest::Approx(s.aux[0]).epsilon(1e-12));
}

TEST_CASE("encoded dimensions follow the spec accessors") {
  RepresentationSpec spec;
  spec.base = BaseKind::dct;
  spec.dct_k = 5;
  spec.delta = DeltaKind::cross_delta;
  CHECK(spec.base_dim() == 5);
  CHECK(spec.delta_dim() == 10);
  CHECK(spec.aux_dim() == 0);
  CHECK(spec.describe() == "dct5+cross");
  spec.base = BaseKind::shapems;
  spec.delta = DeltaKind::in_delta;
  CHECK(spec.base_dim() == 10);
  CHECK(spec.delta_dim() == 9);
  CHECK(spec.aux_dim() == 2);
  CHECK(spec.describe() == "shapems+in");
  spec.base = BaseKind::orif0;
  spec.delta = DeltaKind::none;
  CHECK(spec.describe() == "orif0");
}

TEST_CASE("encode_sample validates the syllable index") {
  corpus::UtteranceRecord utt = tiny_utterance({Contour{}});
  RepresentationSpec spec;
  CHECK(code_of([&] { contour::encode_sample(spec, utt, 1); }) ==
        ErrorCode::mismatch);
  CHECK(code_of([&] { contour::encode_sample(spec, utt, -1); }) ==
        ErrorCode::mismatch);
}
