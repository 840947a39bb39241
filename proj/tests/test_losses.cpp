#include <doctest.h>

#include <cmath>

#include "avc/core/gradcheck.hpp"
#include "avc/core/ops.hpp"
#include "avc/loss/losses.hpp"

using namespace avc;

namespace {

Tensor64 random_tensor(Shape shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel_of(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor64::from(std::move(shape), std::move(v));
}

// Direct evaluation of one anchor's loss from a row of logits.
double anchor_loss(const std::vector<double>& row, std::size_t i, bool include_positive) {
  double denom = 0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (include_positive || k != i) denom += std::exp(row[k]);
  }
  return -std::log(std::exp(row[i]) / denom);
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

TEST_SUITE("bce") {
  TEST_CASE("closed forms") {
    auto half = Tensor64::from({2}, {0.5, 0.5});
    CHECK(std::abs(bce_loss(half, {0.0, 1.0}).item() - std::log(2.0)) < 1e-15);
    CHECK(bce_loss(Tensor64::from({1}, {1.0}), {1.0}).item() < 1e-6);
    CHECK(std::abs(bce_loss(Tensor64::from({1}, {0.9}), {0.0}).item() - 2.302585092994046) < 1e-12);
  }

  TEST_CASE("clamp keeps extreme probabilities finite") {
    auto p = Tensor64::from({2}, {0.0, 1.0});
    const double v = bce_loss(p, {1.0, 0.0}).item();
    CHECK(std::isfinite(v));
    CHECK(std::abs(v + std::log(1e-7)) < 1e-9);
  }

  TEST_CASE("minimized at p = y") {
    for (double y : {0.0, 1.0}) {
      double best_p = -1, best = 1e300;
      for (int k = 0; k <= 100; ++k) {
        const double p = k / 100.0;
        const double v = bce_loss(Tensor64::from({1}, {p}), {y}).item();
        if (v < best) {
          best = v;
          best_p = p;
        }
      }
      CHECK(best_p == y);
    }
  }

  TEST_CASE("labels are validated") {
    auto p = Tensor64::from({2}, {0.3, 0.4});
    CHECK_THROWS_AS(bce_loss(p, {1.0}), ShapeError);
    CHECK_THROWS_AS(bce_loss(p, {1.0, 0.5}), Error);
  }

  TEST_CASE("gradient matches finite differences") {
    RngStream rng(1);
    auto p = random_tensor({6}, rng, 0.05, 0.95);
    p.set_requires_grad(true);
    std::vector<double> y{1, 0, 1, 1, 0, 0};
    CHECK(grad_check([&] { return bce_loss(p, y); }, {p}).max_rel_error < 1e-4);
  }
}

TEST_SUITE("margin") {
  TEST_CASE("closed-form fixtures") {
    CHECK(std::abs(margin_contrastive(Tensor64::from({1}, {0.3}), {1.0}, 0.1).item() - 0.3) < 1e-12);
    CHECK(margin_contrastive(Tensor64::from({1}, {0.25}), {0.0}, 0.1).item() == 0.0);
    CHECK(std::abs(margin_contrastive(Tensor64::from({1}, {0.04}), {0.0}, 0.1).item() - 0.06) < 1e-12);
  }

  TEST_CASE("from embeddings uses the Euclidean distance") {
    auto a = Tensor64::from({1, 2}, {1.0, 0.0});
    auto b = Tensor64::from({1, 2}, {0.0, 1.0});
    CHECK(std::abs(margin_contrastive(a, b, {1.0}).item() - std::sqrt(2.0)) < 1e-12);
  }

  TEST_CASE("non-negative and zero exactly on the stated set") {
    RngStream rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
      const double d = trial % 10 == 0 ? 0.0 : rng.uniform(0.0, 2.0);
      const double y = double(rng.below(2));
      const double v = margin_contrastive(Tensor64::from({1}, {d}), {y}, 0.1).item();
      CHECK(v >= 0.0);
      const bool zero_expected = (y == 1.0 && d == 0.0) || (y == 0.0 && d >= 0.1);
      CHECK((v == 0.0) == zero_expected);
    }
  }

  TEST_CASE("gradient matches finite differences away from the hinge") {
    auto d = Tensor64::from({4}, {0.3, 0.05, 0.5, 0.02}, true);
    std::vector<double> y{1, 0, 0, 1};
    CHECK(grad_check([&] { return margin_contrastive(d, y, 0.1); }, {d}).max_rel_error < 1e-4);
  }
}

TEST_SUITE("combined") {
  TEST_CASE("unweighted sum") {
    auto z = Tensor64::zeros({1});
    CHECK(combined_loss(z, z).item() == 0.0);
    auto a = Tensor64::full({1}, std::log(2.0)), b = Tensor64::full({1}, 0.06);
    CHECK(combined_loss(a, b).item() == std::log(2.0) + 0.06);
  }

  TEST_CASE("gradient is the sum of constituent gradients") {
    RngStream rng(3);
    auto ev = l2_normalize(random_tensor({4, 5}, rng));
    auto ea = l2_normalize(random_tensor({4, 5}, rng));
    ev = ev.clone();
    ev.set_requires_grad(true);
    auto w = Tensor64::full({1}, -2.0, true), b = Tensor64::full({1}, 1.0, true);
    std::vector<double> y{1, 0, 1, 0};
    auto grads = [&](int which) {
      ev.zero_grad();
      auto d = row_distance(ev, ea);
      auto prob = column(softmax(concat_columns(std::vector<Tensor64>{reshape(scalar_affine(d, w, b), {4, 1}),
                                                                       Tensor64::zeros({4, 1})}),
                                 1),
                         0);
      auto lb = bce_loss(prob, y);
      auto lm = margin_contrastive(d, y, 0.1);
      Tensor64 loss = which == 0 ? lb : which == 1 ? lm : combined_loss(lb, lm);
      loss.backward();
      return std::vector<double>(ev.grad().begin(), ev.grad().end());
    };
    auto gb = grads(0), gm = grads(1), gc = grads(2);
    for (std::size_t i = 0; i < gc.size(); ++i) CHECK(std::abs(gc[i] - (gb[i] + gm[i])) < 1e-12);
  }
}

TEST_SUITE("contrastive") {
  TEST_CASE("uniform similarities give ln(N-1) and ln N") {
    for (std::size_t n : {2u, 4u, 32u}) {
      auto s = Tensor64::full({n, n}, 0.37);
      CHECK(std::abs(nt_xent_from_logits(s).item() - std::log(double(n - 1))) < 1e-9);
      CHECK(std::abs(info_nce_from_logits(s).item() - std::log(double(n))) < 1e-9);
      // Identical embeddings make every cosine 1.
      auto z = Tensor64::full({n, 3}, 0.5);
      CHECK(std::abs(nt_xent_batch(z, z, 0.5).item() - std::log(double(n - 1))) < 1e-9);
      CHECK(std::abs(info_nce_batch(z, z, 0.5).item() - std::log(double(n))) < 1e-9);
    }
  }

  TEST_CASE("two-sample worked example") {
    // tau = 0.5, s11 = 0.9, s12 = 0.1.
    auto s = Tensor64::from({2, 2}, {0.9 / 0.5, 0.1 / 0.5, 0.3, 0.3});
    CHECK(std::abs(contrastive_terms(s, false).at({0}) - (-1.6)) < 1e-12);
    CHECK(std::abs(contrastive_terms(s, true).at({0}) - std::log1p(std::exp(-1.6))) < 1e-12);
    // The quoted decimal 0.183897 is a rounded approximation (exact value 0.1839007).
    CHECK(std::abs(contrastive_terms(s, true).at({0}) - 0.183897) < 1e-5);
    auto tie = Tensor64::from({2, 2}, {0.4, 0.4, 0.1, 0.2});
    CHECK(std::abs(contrastive_terms(tie, false).at({0})) < 1e-15);
  }

  TEST_CASE("per-anchor terms match direct evaluation and the softplus identity") {
    RngStream rng(4);
    for (int batch = 0; batch < 100; ++batch) {
      const std::size_t n = 2 + rng.below(15);
      auto s = random_tensor({n, n}, rng, -4.0, 4.0);
      auto nt = contrastive_terms(s, false), in = contrastive_terms(s, true);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(s.data().begin() + long(i * n), s.data().begin() + long((i + 1) * n));
        CHECK(std::abs(nt.at({i}) - anchor_loss(row, i, false)) < 1e-9);
        CHECK(std::abs(in.at({i}) - anchor_loss(row, i, true)) < 1e-9);
        CHECK(std::abs(in.at({i}) - softplus(nt.at({i}))) < 1e-9);
        CHECK(in.at({i}) >= 0.0);
      }
    }
  }

  TEST_CASE("per-anchor constant shifts leave both losses unchanged") {
    RngStream rng(5);
    for (int batch = 0; batch < 20; ++batch) {
      const std::size_t n = 2 + rng.below(8);
      auto s = random_tensor({n, n}, rng, -2.0, 2.0);
      auto shifted = s.clone();
      for (std::size_t i = 0; i < n; ++i) {
        const double c = rng.uniform(-5.0, 5.0);
        for (std::size_t k = 0; k < n; ++k) shifted.mutable_data()[i * n + k] += c;
      }
      CHECK(std::abs(nt_xent_from_logits(s).item() - nt_xent_from_logits(shifted).item()) < 1e-7);
      CHECK(std::abs(info_nce_from_logits(s).item() - info_nce_from_logits(shifted).item()) < 1e-7);
    }
  }

  TEST_CASE("similarity matrix holds scaled cosines") {
    RngStream rng(6);
    auto zv = random_tensor({5, 7}, rng), za = random_tensor({5, 7}, rng);
    auto s = similarity_matrix(zv, za, 0.5);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t k = 0; k < 5; ++k) {
        double dot = 0, nv = 0, na = 0;
        for (std::size_t j = 0; j < 7; ++j) {
          dot += zv.at({i, j}) * za.at({k, j});
          nv += zv.at({i, j}) * zv.at({i, j});
          na += za.at({k, j}) * za.at({k, j});
        }
        const double cosv = dot / std::sqrt(nv * na);
        CHECK(std::abs(s.at({i, k}) * 0.5 - cosv) < 1e-12);
        CHECK(std::abs(s.at({i, k}) * 0.5) <= 1.0 + 1e-12);
      }
  }

  TEST_CASE("symmetric flag averages in the audio-anchored term") {
    RngStream rng(7);
    auto s = random_tensor({4, 4}, rng, -2.0, 2.0);
    double row_mean = 0, col_mean = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      std::vector<double> row(4), col(4);
      for (std::size_t k = 0; k < 4; ++k) {
        row[k] = s.at({i, k});
        col[k] = s.at({k, i});
      }
      row_mean += anchor_loss(row, i, true) / 4;
      col_mean += anchor_loss(col, i, true) / 4;
    }
    CHECK(std::abs(info_nce_from_logits(s, false).item() - row_mean) < 1e-12);
    CHECK(std::abs(info_nce_from_logits(s, true).item() - 0.5 * (row_mean + col_mean)) < 1e-12);
  }

  TEST_CASE("batches smaller than two are rejected") {
    auto z = Tensor64::full({1, 3}, 1.0);
    CHECK_THROWS_AS(nt_xent_batch(z, z), Error);
    CHECK_THROWS_AS(info_nce_batch(z, z), Error);
  }

  TEST_CASE("gradients match finite differences") {
    RngStream rng(8);
    auto zv = random_tensor({4, 6}, rng), za = random_tensor({4, 6}, rng);
    zv.set_requires_grad(true);
    za.set_requires_grad(true);
    for (bool sym : {false, true}) {
      CHECK(grad_check([&] { return nt_xent_batch(zv, za, 0.5, sym); }, {zv, za}).max_rel_error < 1e-4);
      CHECK(grad_check([&] { return info_nce_batch(zv, za, 0.5, sym); }, {zv, za}).max_rel_error < 1e-4);
    }
  }
}
