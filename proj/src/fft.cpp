#include "levyspec/fft.hpp"

#include <fftw3.h>

#include <mutex>

namespace levyspec {

namespace {

// FFTW planning is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

void transform(std::vector<std::complex<double>>& data, int sign) {
    if (data.size() < 2) return;
    auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        plan = fftw_plan_dft_1d(static_cast<int>(data.size()), ptr, ptr, sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
}

} // namespace

void fft_forward(std::vector<std::complex<double>>& data) { transform(data, FFTW_FORWARD); }

void fft_backward(std::vector<std::complex<double>>& data) { transform(data, FFTW_BACKWARD); }

} // namespace levyspec
