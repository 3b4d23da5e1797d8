#include <catch2/catch_amalgamated.hpp>

#include "locrel/fft.hpp"
#include "locrel/rng.hpp"
#include "locrel/tensor.hpp"
#include "support/oracles.hpp"

using namespace locrel;

TEST_CASE("tensor shape bookkeeping") {
  Tensor<float> t({2, 3});
  REQUIRE(t.size() == 6);
  t.at(1, 2) = 5.0f;
  REQUIRE(t.data[5] == 5.0f);
  REQUIRE_THROWS_AS(Tensor<float>({0, 3}), std::invalid_argument);
  REQUIRE_THROWS_AS(Tensor<float>({2}, {1.f, 2.f, 3.f}), std::invalid_argument);
}

TEST_CASE("tensor finiteness check") {
  Tensor<double> t({3});
  REQUIRE(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_FALSE(t.all_finite());
}

TEST_CASE("fft matches naive dft") {
  Rng rng(123);
  for (size_t n : {8u, 64u, 256u}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    auto ref = oracle::naive_dft(x);
    auto got = x;
    fft_inplace(got, false);
    for (size_t k = 0; k < n; ++k) {
      REQUIRE_THAT(got[k].real(), Catch::Matchers::WithinAbs(ref[k].real(), 1e-9 * n));
      REQUIRE_THAT(got[k].imag(), Catch::Matchers::WithinAbs(ref[k].imag(), 1e-9 * n));
    }
  }
}

TEST_CASE("fft inverse round trip") {
  Rng rng(5);
  std::vector<std::complex<double>> x(128);
  for (auto& v : x) v = {rng.normal(), rng.normal()};
  auto y = x;
  fft_inplace(y, false);
  fft_inplace(y, true);
  for (size_t i = 0; i < x.size(); ++i) REQUIRE_THAT(y[i].real(), Catch::Matchers::WithinAbs(x[i].real(), 1e-10));
}

TEST_CASE("fft rejects non power of two") {
  std::vector<std::complex<double>> x(12);
  REQUIRE_THROWS_AS(fft_inplace(x, false), std::invalid_argument);
}

TEST_CASE("rfft/irfft round trip") {
  Rng rng(9);
  std::vector<double> x(100);
  for (auto& v : x) v = rng.normal();
  const size_t nfft = 128;
  auto half = rfft(x, nfft);
  REQUIRE(half.size() == 65);
  auto back = irfft(half, nfft);
  for (size_t i = 0; i < x.size(); ++i) REQUIRE_THAT(back[i], Catch::Matchers::WithinAbs(x[i], 1e-10));
  for (size_t i = x.size(); i < nfft; ++i) REQUIRE_THAT(back[i], Catch::Matchers::WithinAbs(0.0, 1e-10));
}

TEST_CASE("fft convolution matches direct convolution") {
  Rng rng(77);
  std::vector<double> a(37), b(15);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  const auto got = fft_convolve(a, b);
  REQUIRE(got.size() == a.size() + b.size() - 1);
  for (size_t n = 0; n < got.size(); ++n) {
    double ref = 0.0;
    for (size_t k = 0; k < b.size(); ++k)
      if (n >= k && n - k < a.size()) ref += a[n - k] * b[k];
    REQUIRE_THAT(got[n], Catch::Matchers::WithinAbs(ref, 1e-10));
  }
}
