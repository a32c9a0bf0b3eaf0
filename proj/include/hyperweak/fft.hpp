#pragma once

#include <fftw3.h>

#include <complex>
#include <cstring>
#include <functional>
#include <numeric>
#include <vector>

#include "hyperweak/error.hpp"

namespace hyperweak {

// Real n-d transform pair, row-major, last axis fastest. Planned with FFTW_ESTIMATE
// so the arithmetic is identical run to run.
class RealFFT {
 public:
  explicit RealFFT(std::vector<int> dims) : dims_(std::move(dims)) {
    require(!dims_.empty(), ErrorCode::InvalidInput, "fft needs at least one axis");
    n_real_ = std::accumulate(dims_.begin(), dims_.end(), std::size_t{1},
                              [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
    n_cplx_ = n_real_ / dims_.back() * (dims_.back() / 2 + 1);
    real_ = fftw_alloc_real(n_real_);
    cplx_ = fftw_alloc_complex(n_cplx_);
    fwd_ = fftw_plan_dft_r2c(static_cast<int>(dims_.size()), dims_.data(), real_, cplx_,
                             FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_c2r(static_cast<int>(dims_.size()), dims_.data(), cplx_, real_,
                             FFTW_ESTIMATE);
  }
  RealFFT(const RealFFT&) = delete;
  RealFFT& operator=(const RealFFT&) = delete;
  ~RealFFT() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(real_);
    fftw_free(cplx_);
  }

  std::size_t real_size() const { return n_real_; }
  std::size_t complex_size() const { return n_cplx_; }
  const std::vector<int>& dims() const { return dims_; }

  std::vector<std::complex<double>> forward(const std::vector<double>& in) {
    require(in.size() == n_real_, ErrorCode::InvalidInput, "fft size mismatch");
    std::memcpy(real_, in.data(), n_real_ * sizeof(double));
    fftw_execute(fwd_);
    std::vector<std::complex<double>> out(n_cplx_);
    std::memcpy(reinterpret_cast<double*>(out.data()), cplx_, n_cplx_ * sizeof(fftw_complex));
    return out;
  }
  // normalized inverse
  std::vector<double> backward(const std::vector<std::complex<double>>& in) {
    require(in.size() == n_cplx_, ErrorCode::InvalidInput, "fft size mismatch");
    std::memcpy(cplx_, in.data(), n_cplx_ * sizeof(fftw_complex));
    fftw_execute(bwd_);
    std::vector<double> out(real_, real_ + n_real_);
    const double s = 1.0 / static_cast<double>(n_real_);
    for (double& v : out) v *= s;
    return out;
  }

  // Signed frequency index of position i along axis a of the complex array.
  int signed_frequency(int axis, int i) const {
    const int n = dims_[axis];
    if (axis == static_cast<int>(dims_.size()) - 1) return i;
    return i <= n / 2 ? i : i - n;
  }

 private:
  std::vector<int> dims_;
  std::size_t n_real_ = 0, n_cplx_ = 0;
  double* real_ = nullptr;
  fftw_complex* cplx_ = nullptr;
  fftw_plan fwd_ = nullptr, bwd_ = nullptr;
};

// Circular convolution of two equally shaped real arrays.
inline std::vector<double> circular_convolve(RealFFT& fft, const std::vector<double>& a,
                                             const std::vector<double>& b) {
  auto fa = fft.forward(a);
  auto fb = fft.forward(b);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  return fft.backward(fa);
}

}  // namespace hyperweak
