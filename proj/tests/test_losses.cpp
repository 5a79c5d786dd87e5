#include <doctest.h>

#include <random>

#include "gradcheck.hpp"
#include "nightvpr/error.hpp"
#include "nightvpr/losses.hpp"
#include "oracles.hpp"

using namespace nightvpr;
using namespace nightvpr::losses;

namespace {

// Head whose rows are the given unit vectors.
ClassifierHead head_from(const std::vector<std::vector<double>>& rows, double s, double m) {
  ClassifierHead h;
  h.classes = rows.size();
  h.dim = rows[0].size();
  h.s = s;
  h.m = m;
  for (const auto& r : rows) h.w.insert(h.w.end(), r.begin(), r.end());
  return h;
}

ClassifierHead random_head(std::mt19937_64& rng, std::size_t c, std::size_t d, double s,
                           double m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t j = 0; j < c; ++j) rows.push_back(oracle::random_unit(rng, d));
  return head_from(rows, s, m);
}

// x such that W_0.x = c0 and W_1.x = c1 for orthonormal rows e0, e1.
Descriptor two_cos(double c0, double c1) {
  const double rest = std::sqrt(std::max(0.0, 1.0 - c0 * c0 - c1 * c1));
  return Descriptor{{c0, c1, rest}};
}

}  // namespace

TEST_CASE("cosines") {
  std::mt19937_64 rng(1);
  const auto head = random_head(rng, 5, 8, 30, 0.4);
  const Descriptor x{std::vector<double>(head.row(2).begin(), head.row(2).end())};
  CHECK(std::abs(cosines(x.span(), head)[2] - 1.0) < 1e-6);

  const auto ortho = head_from({{1, 0, 0}, {0, 1, 0}}, 30, 0.4);
  CHECK(std::abs(cosines(std::vector<double>{0, 0, 1}, ortho)[0]) < 1e-6);

  for (int i = 0; i < 200; ++i) {
    const auto v = oracle::random_unit(rng, 8);
    for (double c : cosines(v, head)) {
      CHECK(c >= -1 - 1e-6);
      CHECK(c <= 1 + 1e-6);
    }
  }
  CHECK_THROWS_AS(cosines(std::vector<double>{1, 0}, head), Error);
}

TEST_CASE("lmc closed forms") {
  // Four classes, equal cosines, s = 1, m = 0.
  const auto h4 = head_from({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}, 1.0, 0.0);
  const Descriptor x{{0.5, 0.5, 0.5, 0.5}};
  const std::vector<Descriptor> b = {x};
  const std::vector<std::size_t> y = {2};
  CHECK(std::abs(lmc_loss(b, y, h4).loss - std::log(4.0)) < 1e-6);

  // Two classes, cos_gt 0.9, cos_other 0.1, s 30, m 0.4.
  const auto h2 = head_from({{1, 0, 0}, {0, 1, 0}}, 30.0, 0.4);
  const std::vector<Descriptor> b2 = {two_cos(0.9, 0.1)};
  const std::vector<std::size_t> y2 = {0};
  CHECK(std::abs(lmc_loss(b2, y2, h2).loss - std::log1p(std::exp(-12.0))) < 1e-9);
  CHECK(std::abs(lmc_loss(b2, y2, h2).loss - 6.144e-6) < 1e-9);
}

TEST_CASE("lmc with s=1, m=0 is softmax cross-entropy") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const std::size_t c = 2 + rng() % 8, d = 3 + rng() % 10, n = 1 + rng() % 5;
    const auto head = random_head(rng, c, d, 1.0, 0.0);
    std::vector<Descriptor> batch;
    std::vector<std::size_t> labels;
    std::vector<double> logits;
    for (std::size_t k = 0; k < n; ++k) {
      batch.push_back({oracle::random_unit(rng, d)});
      labels.push_back(rng() % c);
      for (std::size_t j = 0; j < c; ++j) {
        double dot = 0;
        for (std::size_t q = 0; q < d; ++q) dot += head.w[j * d + q] * batch.back().values[q];
        logits.push_back(dot);
      }
    }
    CHECK(std::abs(lmc_loss(batch, labels, head).loss -
                   oracle::softmax_cross_entropy(logits, c, labels)) < 1e-6);
  }
}

TEST_CASE("lmc is non-negative and decreasing in the true cosine") {
  const auto h = head_from({{1, 0, 0}, {0, 1, 0}}, 30.0, 0.4);
  const std::vector<std::size_t> y = {0};
  double prev = 1e300;
  for (double c0 = -0.9; c0 <= 0.95; c0 += 0.05) {
    const std::vector<Descriptor> b = {two_cos(c0, 0.2)};
    const double l = lmc_loss(b, y, h).loss;
    CHECK(l >= 0.0);
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("argmax of cosines does not depend on s") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    auto head = random_head(rng, 6, 5, 1.0, 0.0);
    const auto x = oracle::random_unit(rng, 5);
    auto argmax = [&](double s) {
      head.s = s;
      const auto z = margin_logits(cosines(x, head), 0, head);
      return std::max_element(z.begin(), z.end()) - z.begin();
    };
    const auto ref = argmax(1.0);
    for (double s : {0.5, 10.0, 30.0, 64.0}) CHECK(argmax(s) == ref);
  }
}

TEST_CASE("lmc errors") {
  const auto h = head_from({{1, 0}, {0, 1}}, 30.0, 0.4);
  const std::vector<Descriptor> b = {{{1, 0}}};
  const std::vector<std::size_t> bad = {2};
  CHECK_THROWS_AS(lmc_loss(b, bad, h), Error);
  CHECK_THROWS_AS(lmc_loss({}, {}, h), Error);
  const std::vector<std::size_t> two = {0, 1};
  CHECK_THROWS_AS(lmc_loss(b, two, h), Error);
}

TEST_CASE("softened probabilities") {
  const auto h4 = head_from({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}, 30.0, 0.0);
  const auto u = softened_probs(std::vector<double>{0.5, 0.5, 0.5, 0.5}, 1, h4);
  for (double p : u.probs) CHECK(std::abs(p - 0.25) < 1e-12);

  const auto h2 = head_from({{1, 0, 0}, {0, 1, 0}}, 30.0, 0.4);
  const auto p = softened_probs(two_cos(0.9, 0.1).values, 0, h2);
  CHECK(std::abs(p.probs[0] - 1.0 / (1.0 + std::exp(-12.0))) < 1e-9);
  CHECK(std::abs(p.probs[0] - 0.99999386) < 1e-8);

  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto head = random_head(rng, 7, 6, 30.0, 0.4);
    const auto d = softened_probs(oracle::random_unit(rng, 6), rng() % 7, head);
    double sum = 0.0;
    for (double v : d.probs) {
      CHECK(v >= kProbFloor);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("ikt fixtures and Gibbs inequality") {
  const SoftenedDistribution p{{0.9, 0.1}}, q{{0.5, 0.5}};
  CHECK(std::abs(ikt_loss(p, q).loss - 0.3681) < 1e-4);
  CHECK(std::abs(ikt_loss(p, q).loss - (0.9 * std::log(1.8) + 0.1 * std::log(0.2))) < 1e-12);
  CHECK(std::abs(ikt_loss(p, p).loss) < 1e-12);

  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t c = 2 + rng() % 10;
    const SoftenedDistribution a{oracle::random_distribution(rng, c)};
    const SoftenedDistribution b{oracle::random_distribution(rng, c)};
    const double d = ikt_loss(a, b).loss;
    CHECK(d >= 0.0);
    CHECK(std::abs(d - oracle::kl(a.probs, b.probs)) < 1e-12);
    CHECK(std::abs(ikt_loss(a, a).loss) < 1e-12);
    // Zero only for equal distributions.
    CHECK(d > 1e-12);
  }
}

TEST_CASE("ikt zero entries") {
  const SoftenedDistribution p{{1.0, 0.0}}, q{{0.5, 0.5}};
  CHECK(std::abs(ikt_loss(p, q).loss - std::log(2.0)) < 1e-12);
  const SoftenedDistribution z{{1.0, 0.0}};
  CHECK_THROWS_AS(ikt_loss(q, z), Error);
  CHECK_THROWS_AS(ikt_loss(p, SoftenedDistribution{{1.0}}), Error);
}

TEST_CASE("ikt gradient is q minus p in the logits") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 50; ++i) {
    const std::size_t c = 5;
    std::normal_distribution<double> n;
    std::vector<double> z(c);
    for (auto& v : z) v = n(rng);
    const SoftenedDistribution p{oracle::random_distribution(rng, c)};
    auto q_of = [&](const std::vector<double>& zz) {
      double mx = *std::max_element(zz.begin(), zz.end()), s = 0;
      std::vector<double> q(c);
      for (std::size_t j = 0; j < c; ++j) s += q[j] = std::exp(zz[j] - mx);
      for (auto& v : q) v /= s;
      return SoftenedDistribution{q};
    };
    for (bool scalar : {false, true}) {
      const auto r = scalar ? ikt_loss_scalar(p, q_of(z), 1) : ikt_loss(p, q_of(z));
      for (std::size_t j = 0; j < c; ++j) {
        auto up = z, down = z;
        up[j] += 1e-5;
        down[j] -= 1e-5;
        const double fu = scalar ? ikt_loss_scalar(p, q_of(up), 1).loss : ikt_loss(p, q_of(up)).loss;
        const double fd =
            scalar ? ikt_loss_scalar(p, q_of(down), 1).loss : ikt_loss(p, q_of(down)).loss;
        CHECK(std::abs(r.d_logits[j] - (fu - fd) / 2e-5) < 1e-7);
      }
    }
  }
}

TEST_CASE("combined loss reduces to lmc") {
  std::mt19937_64 rng(7);
  const auto head = random_head(rng, 5, 6, 30.0, 0.4);
  std::vector<Descriptor> batch;
  std::vector<std::size_t> labels;
  std::vector<SoftenedDistribution> same, other;
  for (int i = 0; i < 4; ++i) {
    batch.push_back({oracle::random_unit(rng, 6)});
    labels.push_back(rng() % 5);
    same.push_back(softened_probs(batch.back().span(), labels.back(), head));
    other.push_back(softened_probs(oracle::random_unit(rng, 6), labels.back(), head));
  }
  const auto plain = lmc_loss(batch, labels, head);
  const auto zero_alpha = combined_loss(batch, labels, head, other, 0.0);
  CHECK(zero_alpha.loss == plain.loss);
  CHECK(zero_alpha.d_x == plain.d_x);
  CHECK(zero_alpha.d_w == plain.d_w);
  CHECK(zero_alpha.ikt > 0.0);

  for (double alpha : {1.0, 30.0, 1000.0}) {
    const auto r = combined_loss(batch, labels, head, same, alpha);
    CHECK(std::abs(r.loss - plain.loss) < 1e-12);
    CHECK(std::abs(r.ikt) < 1e-12);
  }
  CHECK_THROWS_AS(combined_loss(batch, labels, head, std::span(other).first(2), 1.0), Error);
}

TEST_CASE("auto alpha") {
  CHECK(auto_alpha(12.0, 0.4, 30.0) == doctest::Approx(30.0));
  CHECK(auto_alpha(3.0, 0.0, 30.0) == 30.0);
  CHECK(auto_alpha(3.0, 1e-15, 7.0) == 7.0);
}

TEST_CASE("head init and validation") {
  const auto h = ClassifierHead::init(5, 4, 30, 0.4, 3);
  CHECK_NOTHROW(h.validate());
  CHECK(h == ClassifierHead::init(5, 4, 30, 0.4, 3));
  auto bad = h;
  bad.w[0] += 0.1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.normalize_rows();
  CHECK_NOTHROW(bad.validate());
  bad = h;
  bad.m = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = h;
  bad.s = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  LossConfig cfg;
  cfg.alpha = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("objective gradients match central differences") {
  using gradcheck::Objective;
  for (auto which : {Objective::Lmc, Objective::Ikt, Objective::Combined}) {
    for (double s : {10.0, 30.0}) {
      double worst = 0.0;
      int used = 0;
      for (std::uint64_t seed = 0; used < 10 && seed < 500; ++seed) {
        const auto r = gradcheck::objective_check(seed, which, false, s);
        if (which != Objective::Lmc && r.min_prob < 1e-9) continue;
        worst = std::max(worst, r.max_rel_error);
        ++used;
      }
      MESSAGE("objective " << static_cast<int>(which) << " s " << s << " max relative error "
                           << worst);
      CHECK(used == 10);
      CHECK(worst < 1e-4);
    }
  }
  double scalar = 0.0;
  int used = 0;
  for (std::uint64_t seed = 0; used < 5 && seed < 500; ++seed) {
    const auto r = gradcheck::objective_check(seed, Objective::Combined, true);
    if (r.min_prob < 1e-9) continue;
    scalar = std::max(scalar, r.max_rel_error);
    ++used;
  }
  CHECK(used == 5);
  CHECK(scalar < 1e-4);
}

TEST_CASE("scalar ikt keeps precision when the true class saturates") {
  // True class at 1 - 3e-11 in the night, 1 - 1e-4 in the day.
  const SoftenedDistribution day{{1 - 1e-4, 5e-5, 5e-5}};
  const SoftenedDistribution night{{1 - 3e-11, 1.5e-11, 1.5e-11}};
  const double rest_a = 1e-4, rest_q = 3e-11;
  const double expect = (1 - rest_a) * std::log((1 - rest_a) / (1 - rest_q)) +
                        rest_a * std::log(rest_a / rest_q);
  const auto r = ikt_loss_scalar(day, night, 0);
  CHECK(std::abs(r.loss - expect) < 1e-12 * expect);
  CHECK(r.d_logits[0] == doctest::Approx(rest_a - rest_q).epsilon(1e-12));
  CHECK_THROWS_AS(ikt_loss_scalar(day, night, 3), Error);
}
