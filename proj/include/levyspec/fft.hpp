#pragma once

#include <complex>
#include <vector>

namespace levyspec {

/// In-place DFT, X_k = sum_j x_j exp(-2 pi i jk/N). Any length; FFTW-backed.
void fft_forward(std::vector<std::complex<double>>& data);

/// In-place unnormalized inverse DFT, x_j = sum_k X_k exp(+2 pi i jk/N).
void fft_backward(std::vector<std::complex<double>>& data);

} // namespace levyspec
