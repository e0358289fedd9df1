#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "qctrl/dataset.hpp"
#include "qctrl/pulse.hpp"

namespace {

using namespace qctrl;
using std::numbers::pi;

double trapezoid(const std::vector<double>& v, double dt) {
  double sum = 0.0;
  for (std::size_t i = 1; i < v.size(); ++i) sum += 0.5 * (v[i - 1] + v[i]) * dt;
  return sum;
}

TEST(Trajectory, EndpointsAreExactForAnyCoefficients) {
  FourierControl fc = make_trajectory_control(5.0);
  fc.coefficients = {0.3, -0.2, 0.1, 0.05, -0.4, 0.2, 0.0, 0.7};
  EXPECT_NEAR(eval_trajectory_raw(fc, 0.0), 0.0, 1e-15);
  EXPECT_NEAR(eval_trajectory_raw(fc, 5.0), 1.0, 1e-14);
  for (double t = 0.0; t <= 5.0; t += 0.01) {
    EXPECT_GE(eval_trajectory(fc, t), 0.0);
    EXPECT_LE(eval_trajectory(fc, t), 1.0);
  }
}

TEST(Trajectory, ZeroCoefficientsAreLinear) {
  const FourierControl fc = make_trajectory_control(3.0);
  for (double t = 0.0; t <= 3.0; t += 0.1) EXPECT_NEAR(eval_trajectory(fc, t), t / 3.0, 1e-15);
}

TEST(Trajectory, NamedShapes) {
  EXPECT_EQ(named_trajectory("linear", 2.5, 10.0), 0.25);
  EXPECT_NEAR(named_trajectory("sine", 0.0, 10.0), 0.0, 1e-15);
  EXPECT_NEAR(named_trajectory("sine", 5.0, 10.0), 0.5, 1e-15);
  EXPECT_NEAR(named_trajectory("sine", 10.0, 10.0), 1.0, 1e-15);
  EXPECT_THROW(named_trajectory("cubic", 1.0, 2.0), ConfigError);
}

TEST(Pulse, FourierTermsAreZeroArea) {
  for (int k = 1; k <= 8; ++k) {
    FourierControl fc = make_pulse_control(5.0, k, k);
    fc.coefficients = {10.0};
    EXPECT_NEAR(trapezoid(sample(fc, 0.001), 0.001), 0.0, 1e-9) << k;
  }
}

TEST(Pulse, KindMismatchIsRejected) {
  EXPECT_THROW(eval_pulse(make_trajectory_control(1.0), 0.1), ConfigError);
  EXPECT_THROW(eval_trajectory(make_pulse_control(1.0), 0.1), ConfigError);
  EXPECT_THROW(make_pulse_control(1.0, 4, 3), ConfigError);
}

TEST(Pulse, IdealIntensities) {
  EXPECT_NEAR(ideal_sine_intensity(3, 0.5), 54.3733, 1e-3);
  EXPECT_NEAR(std::cyl_bessel_j(0.0, ideal_sine_intensity(2, 0.25) * 0.25 / pi), 0.0, 1e-12);
  EXPECT_NEAR(ideal_rect_intensity(6, 0.5), 24.0 * pi, 1e-12);
  EXPECT_THROW(ideal_sine_intensity(0, 0.5), ConfigError);
  EXPECT_THROW(ideal_rect_intensity(1, 0.0), ConfigError);
}

TEST(Pulse, RectangularShape) {
  EXPECT_EQ(rect_pulse(3.0, 0.5, 0.1), 3.0);
  EXPECT_EQ(rect_pulse(3.0, 0.5, 0.6), -3.0);
  EXPECT_EQ(rect_pulse(3.0, 0.5, 1.1), 3.0);
  EXPECT_NEAR(trapezoid(sample([](double t) { return rect_pulse(3.0, 0.5, t); }, 5.0, 1e-4), 1e-4), 0.0, 1e-3);
}

TEST(Pulse, ProjectionRecoversSinePulseInBasis) {
  // I sin(2 pi t) over T = 5 is the k = 4 term of the pulse basis.
  const FourierControl fc = project_pulse([](double t) { return sine_pulse(54.37, 0.5, t); }, make_pulse_control(5.0), 0.01);
  for (std::size_t j = 0; j < fc.coefficients.size(); ++j) {
    const double expected = (fc.first_index + static_cast<int>(j) == 4) ? 54.37 : 0.0;
    EXPECT_NEAR(fc.coefficients[j], expected, 1e-9);
  }
}

TEST(Rfs, DeterministicPerSeed) {
  const RFSConfig cfg;
  const ControlGrid a = rfs_sample(cfg, 17, 2.5, 0.05);
  const ControlGrid b = rfs_sample(cfg, 17, 2.5, 0.05);
  const ControlGrid c = rfs_sample(cfg, 18, 2.5, 0.05);
  EXPECT_EQ(a.s_values, b.s_values);
  EXPECT_EQ(a.c_values, b.c_values);
  EXPECT_NE(a.c_values, c.c_values);
  EXPECT_EQ(a.s_values.size(), 51u);
}

TEST(Rfs, FullSpanHitsWindowEdges) {
  const ControlGrid g = rfs_sample(RFSConfig{}, 3, 2.5, 0.05);
  const auto [smin, smax] = std::minmax_element(g.s_values.begin(), g.s_values.end());
  const auto [cmin, cmax] = std::minmax_element(g.c_values.begin(), g.c_values.end());
  EXPECT_NEAR(*smin, 0.0, 1e-12);
  EXPECT_NEAR(*smax, 1.0, 1e-12);
  EXPECT_NEAR(*cmin, -60.0, 1e-12);
  EXPECT_NEAR(*cmax, 60.0, 1e-12);
}

TEST(Rfs, PartialSpanStaysInsideWindow) {
  RFSConfig cfg;
  cfg.c_min_span_fraction = 0.05;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const ControlGrid g = rfs_sample(cfg, seed, 2.5, 0.05);
    for (double c : g.c_values) {
      EXPECT_GE(c, -60.0 - 1e-12);
      EXPECT_LE(c, 60.0 + 1e-12);
    }
  }
}

TEST(Rfs, ComponentCountWithinRange) {
  RFSConfig cfg;
  Rng rng(9);
  std::set<std::size_t> seen;
  for (int i = 0; i < 500; ++i) seen.insert(rfs_components(cfg, rng).size());
  EXPECT_EQ(*seen.begin(), 3u);
  EXPECT_EQ(*seen.rbegin(), 8u);
}

TEST(Rfs, RejectsBadConfig) {
  RFSConfig cfg;
  cfg.k_min = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RFSConfig{};
  cfg.c_min_span_fraction = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Seeds, DerivedStreamsDiffer) {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 4; ++s)
    for (std::uint64_t i = 0; i < 250; ++i) seeds.insert(derive_seed(42, s, i));
  EXPECT_EQ(seeds.size(), 1000u);
  EXPECT_EQ(derive_seed(42, 1, 7), derive_seed(42, 1, 7));
}

TEST(Dataset, UpsampleKeepsSamplesAndInterpolates) {
  const ControlGrid g{0.2, 0.1, {0.0, 0.5, 1.0}, {0.0, 10.0, -10.0}};
  const ControlGrid f = upsample_linear(g, 4);
  ASSERT_EQ(f.s_values.size(), 9u);
  EXPECT_DOUBLE_EQ(f.dt, 0.025);
  EXPECT_EQ(f.c_values[4], 10.0);
  EXPECT_DOUBLE_EQ(f.c_values[6], 0.0);
  EXPECT_EQ(f.c_values.back(), -10.0);
  EXPECT_THROW(stride_for(0.05, 0.003), ConfigError);
  EXPECT_EQ(stride_for(0.05, 0.005), 10u);
}

TEST(Dataset, RecordIsReproducibleAndRoundTrips) {
  GenerationSpec spec;
  const DatasetRecord r = generate_record(5, 1234, spec);
  EXPECT_EQ(r.n_steps, 50u);
  EXPECT_EQ(r.bloch.size(), 51u);
  EXPECT_NO_THROW(r.validate());

  const DatasetRecord again = generate_record(5, 1234, spec);
  EXPECT_EQ(again.bloch, r.bloch);

  const DatasetRecord back = record_from_json(nlohmann::json::parse(to_jsonl_line(r)));
  EXPECT_EQ(back.s, r.s);
  EXPECT_EQ(back.c, r.c);
  EXPECT_EQ(back.bloch, r.bloch);
  EXPECT_EQ(back.bath.coupling, r.bath.coupling);
  EXPECT_EQ(back.seed, r.seed);

  // Re-integration from the stored controls reproduces the stored truth.
  EXPECT_EQ(integrate_coarse(back.controls(), back.bath, back.truth_dt), r.bloch);
}

TEST(Dataset, MalformedRecordIsIoError) {
  EXPECT_THROW(record_from_json(nlohmann::json::parse(R"({"id": 1})")), IoError);
  nlohmann::json j = to_json(generate_record(0, 1, GenerationSpec{}));
  j["bloch"].erase(0);
  EXPECT_THROW(record_from_json(j), IoError);
}

}  // namespace
