#include <doctest.h>

#include <cmath>

#include "umwfl/channel.hpp"
#include "umwfl/errors.hpp"
#include "umwfl/rng.hpp"

using namespace umwfl;

namespace {

struct Moments {
  double mean = 0, se = 0;
};

template <typename Fn>
Moments moments(int n, Fn&& draw) {
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = draw(i);
    s += x;
    s2 += x * x;
  }
  Moments m;
  m.mean = s / n;
  m.se = std::sqrt((s2 / n - m.mean * m.mean) / (n - 1));
  return m;
}

}  // namespace

TEST_SUITE("channel") {

TEST_CASE("unit conversions") {
  CHECK(db_to_linear(-40) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(dbm_to_watts(30) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dbm_to_watts(-80) == doctest::Approx(1e-11).epsilon(1e-12));
}

TEST_CASE("defaults and validation") {
  const RadioConfig d = RadioConfig::defaults();
  CHECK(d.antennas == 8);
  CHECK(d.users == 3);
  CHECK(d.power_budget == doctest::Approx(1.0));
  CHECK(d.power_scaling == 1.0);
  CHECK(d.uplink_gain(0) == doctest::Approx(1e-4));
  CHECK(d.downlink_gain(2) == doctest::Approx(1e-4));

  RadioConfig bad = d;
  bad.noise_power_server = -1;
  try {
    bad.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.path() == "/radio/noise_power_server_w");
  }
  bad = d;
  bad.noise_power_user[1] = -1e-3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = d;
  bad.power_scaling = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("sampled channels have per-entry variance equal to the pathloss gain") {
  RadioConfig cfg = RadioConfig::defaults(1, 1);
  cfg.pathloss_db = {-3.0};
  const double gain = db_to_linear(-3.0);
  const int draws = 100000;
  std::vector<cd> h(draws), g(draws);
  for (int i = 0; i < draws; ++i) {
    const auto c = sample_channels(cfg, 11, static_cast<std::uint64_t>(i));
    h[i] = c.uplink[0](0);
    g[i] = c.downlink[0](0);
  }
  const auto power = moments(draws, [&](int i) { return std::norm(h[i]); });
  CHECK(std::abs(power.mean - gain) <= 3 * power.se);
  const auto down = moments(draws, [&](int i) { return std::norm(g[i]); });
  CHECK(std::abs(down.mean - gain) <= 3 * down.se);
  const auto re = moments(draws, [&](int i) { return h[i].real() * h[i].real(); });
  CHECK(std::abs(re.mean - gain / 2) <= 3 * re.se);
  const auto im = moments(draws, [&](int i) { return h[i].imag() * h[i].imag(); });
  CHECK(std::abs(im.mean - gain / 2) <= 3 * im.se);
}

TEST_CASE("same seed gives the same channel, other rounds differ") {
  const RadioConfig cfg = RadioConfig::defaults();
  const auto a = sample_channels(cfg, 5, 2);
  const auto b = sample_channels(cfg, 5, 2);
  const auto c = sample_channels(cfg, 5, 3);
  for (int k = 0; k < cfg.users; ++k) {
    CHECK(a.uplink[k] == b.uplink[k]);
    CHECK(a.downlink[k] == b.downlink[k]);
    CHECK(a.uplink[k] != c.uplink[k]);
  }
}

TEST_CASE("awgn variance, zero variance and errors") {
  CHECK(sample_awgn(3, 2, 0.0, 1, "x").isZero(0));
  CHECK_THROWS_AS(sample_awgn(3, 2, -1.0, 1, "x"), NumericError);
  const MatrixXcd n = sample_awgn(100000, 1, 2.5, 9, "noise");
  const auto m = moments(100000, [&](int i) { return std::norm(n(i, 0)); });
  CHECK(std::abs(m.mean - 2.5) <= 3 * m.se);
  CHECK(sample_awgn(4, 4, 1.0, 9, "noise") == sample_awgn(4, 4, 1.0, 9, "noise"));
}

TEST_CASE("distinct labels give uncorrelated streams") {
  const int draws = 100000;
  const MatrixXcd a = sample_awgn(draws, 1, 1.0, 3, "stream/a");
  const MatrixXcd b = sample_awgn(draws, 1, 1.0, 3, "stream/b");
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < draws; ++i) {
    sab += a(i, 0).real() * b(i, 0).real();
    saa += a(i, 0).real() * a(i, 0).real();
    sbb += b(i, 0).real() * b(i, 0).real();
  }
  CHECK(std::abs(sab / std::sqrt(saa * sbb)) <= 0.02);
}

TEST_CASE("substream keys depend on index order") {
  Substream a(1, "label", {2, 3});
  Substream b(1, "label", {2, 3});
  Substream c(1, "label", {3, 2});
  const double x = a.gaussian(1), y = b.gaussian(1), z = c.gaussian(1);
  CHECK(x == y);
  CHECK(x != z);
}

}
