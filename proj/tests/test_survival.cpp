#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "phos/rng.hpp"
#include "phos/survival.hpp"

using namespace phos;
using phos::testing::max_grad_rel_error;

namespace {

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor p_tensor(const std::vector<double>& p) {
  return Tensor({1, p.size()}, p, true);
}

}  // namespace

TEST_CASE("make_bins equidistant widths") {
  BinConfig bins = make_bins(4, 1800.0);
  REQUIRE(bins.widths.size() == 4);
  for (double w : bins.widths) CHECK(w == 450.0);

  BinConfig two = make_bins(2, 1.0);
  CHECK(two.widths[0] == 0.5);
  CHECK(two.widths[1] == 0.5);

  BinConfig odd = make_bins(7, 1234.5);
  const double total =
      std::accumulate(odd.widths.begin(), odd.widths.end(), 0.0);
  CHECK(std::abs(total - 1234.5) < 1e-9);

  CHECK_THROWS_AS(make_bins(1, 1800.0), std::invalid_argument);
  CHECK_THROWS_AS(make_bins(3, 0.0), std::invalid_argument);
}

TEST_CASE("bin_probabilities closed forms") {
  Tensor single = Tensor::zeros({1, 1, 1, 1, 1});
  CHECK(bin_probabilities(single).value_at(0) == 0.5);

  Tensor uniform = Tensor::zeros({1, 1, 2, 2, 2});
  CHECK(bin_probabilities(uniform).value_at(0) ==
        doctest::Approx(sigmoid_scalar(std::log(8.0))).epsilon(1e-12));

  Tensor low = Tensor::full({1, 1, 2, 2, 2}, -100.0);
  CHECK(bin_probabilities(low).value_at(0) < 1e-40);
}

TEST_CASE("weighted_bin_predictions hand values") {
  BinConfig bins = make_bins(4, 1800.0);
  Tensor zero = Tensor::zeros({1, 4});
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(weighted_bin_predictions(zero, bins).value_at(i) == 0.0);
  }
  Tensor one = Tensor::full({1, 4}, 1.0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(weighted_bin_predictions(one, bins).value_at(i) == 450.0);
  }
  BinConfig halves = make_bins(2, 1800.0);  // widths 900
  Tensor half = Tensor::full({1, 2}, 0.5);
  Tensor w = weighted_bin_predictions(half, halves);
  CHECK(w.value_at(0) == 450.0);
  CHECK(w.value_at(1) == 450.0);
}

TEST_CASE("os_prediction hand values") {
  BinConfig bins = make_bins(4, 1800.0);
  CHECK(os_prediction(Tensor::zeros({1, 4}), 1800.0).value_at(0) == 1800.0);

  Tensor p({1, 4}, {1.0, 1.0, 0.0, 0.0});
  Tensor pw = weighted_bin_predictions(p, bins);
  CHECK(os_prediction(pw, 1800.0).value_at(0) == 900.0);

  Tensor full = weighted_bin_predictions(Tensor::full({1, 4}, 1.0), bins);
  CHECK(os_prediction(full, 1800.0).value_at(0) == 0.0);
}

TEST_CASE("monotonic_penalty hand values") {
  CHECK(monotonic_penalty(p_tensor({1.0, 0.7, 0.3})).item() == 0.0);
  CHECK(monotonic_penalty(p_tensor({0.2, 0.8, 0.5})).item() ==
        doctest::Approx(0.3).epsilon(1e-12));
  CHECK(monotonic_penalty(p_tensor({0.0, 1.0})).item() == 1.0);
}

TEST_CASE("monotonic_penalty batch mean and gradient") {
  Tensor p({2, 3}, {0.2, 0.8, 0.5, 1.0, 0.5, 0.0}, true);
  CHECK(monotonic_penalty(p).item() == doctest::Approx(0.15).epsilon(1e-12));

  Rng rng(43);
  std::vector<double> v(8);
  for (double& x : v) x = rng.uniform(0.05, 0.95);
  Tensor q({2, 4}, v, true);
  auto loss = [&] { return monotonic_penalty(q); };
  CHECK(max_grad_rel_error(loss, {q}) < 1e-6);
}

TEST_CASE("total_loss hand values") {
  Tensor mono = p_tensor({0.9, 0.5, 0.1});

  Tensor y_hat({1}, {900.0}, true);
  CHECK(total_loss(y_hat, {900.0}, mono, 10000.0).item() == 0.0);
  CHECK(total_loss(y_hat, {1000.0}, mono, 10000.0).item() == 100.0);

  // a vector with penalty exactly 0.01: rises by 0.02 over 2 gaps
  Tensor p({1, 3}, {0.5, 0.52, 0.52}, true);
  CHECK(monotonic_penalty(p).item() == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(total_loss(y_hat, {1000.0}, p, 10000.0).item() ==
        doctest::Approx(200.0).epsilon(1e-12));
}

TEST_CASE("transition_bin hand values and tie-breaks") {
  std::vector<double> a{0.9, 0.7, 0.2, 0.1};
  CHECK(transition_bin(a) == 2);
  std::vector<double> b{0.5, 0.5};
  CHECK(transition_bin(b) == 1);
  std::vector<double> c{1.0, 1.0, 1.0};
  CHECK(transition_bin(c) == 1);
}

TEST_CASE("saliency_mask selection and tie-breaks") {
  std::vector<double> onehot(27, 0.0);
  onehot[14] = 10.0;
  auto mask = saliency_mask(onehot, 0.05);  // k = max(1, floor(1.35)) = 1
  CHECK(std::accumulate(mask.begin(), mask.end(), 0) == 1);
  CHECK(mask[14] == 1);

  std::vector<double> flat(27, 2.0);
  auto first3 = saliency_mask(flat, 3.0 / 27.0 + 1e-12);
  CHECK(std::accumulate(first3.begin(), first3.end(), 0) == 3);
  CHECK(first3[0] == 1);
  CHECK(first3[1] == 1);
  CHECK(first3[2] == 1);

  std::vector<double> big(8000);
  Rng rng(47);
  for (double& x : big) x = rng.normal();
  auto top = saliency_mask(big, 0.05);
  CHECK(std::accumulate(top.begin(), top.end(), 0) == 400);  // floor(0.05*8000)
}

TEST_CASE("fuzz: os_prediction range and weighted-sum identity") {
  Rng rng(53);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.index(6);
    std::vector<double> pv(n);
    for (double& x : pv) x = rng.uniform();
    BinConfig bins = make_bins(n, 1800.0);
    Tensor p({1, n}, pv);
    Tensor pw = weighted_bin_predictions(p, bins);
    Tensor y = os_prediction(pw, 1800.0);
    CHECK(y.value_at(0) >= 0.0);
    CHECK(y.value_at(0) <= 1800.0);
    double sum_pw = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum_pw += pw.value_at(i);
    CHECK(std::abs(sum_pw - (1800.0 - y.value_at(0))) < 1e-9);
  }
}

TEST_CASE("fuzz: penalty is zero iff non-increasing") {
  Rng rng(59);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.index(5);
    std::vector<double> pv(n);
    for (double& x : pv) x = rng.uniform();
    bool non_increasing = true;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (pv[i + 1] > pv[i]) non_increasing = false;
    }
    const double pen = monotonic_penalty(Tensor({1, n}, pv)).item();
    CHECK((pen == 0.0) == non_increasing);

    // appending a bin equal to the last value leaves the sum untouched
    // (the averaging constant changes with N, so compare raw gap sums)
    std::vector<double> ext = pv;
    ext.push_back(pv.back());
    const double pen_ext = monotonic_penalty(Tensor({1, n + 1}, ext)).item();
    CHECK(std::abs(pen_ext * static_cast<double>(n) -
                   pen * static_cast<double>(n - 1)) < 1e-12);
  }
}

TEST_CASE("fuzz: p is non-decreasing in a constant saliency shift") {
  Rng rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(8);
    for (double& x : v) x = rng.normal();
    Tensor s({1, 1, 2, 2, 2}, v);
    double prev = -1.0;
    for (double c : {-2.0, -0.5, 0.0, 0.5, 2.0}) {
      std::vector<double> shifted(v);
      for (double& x : shifted) x += c;
      const double p =
          bin_probabilities(Tensor({1, 1, 2, 2, 2}, shifted)).value_at(0);
      CHECK(p >= prev);
      prev = p;
    }
  }
}
