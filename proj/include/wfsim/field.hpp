#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace wfsim {

using cplx = std::complex<double>;

// Square real-valued raster (intensity frames, phase screens).
struct Image {
    std::size_t side = 0;
    std::vector<double> v;

    Image() = default;
    explicit Image(std::size_t s, double fill = 0.0) : side(s), v(s * s, fill) {}

    double& at(std::size_t r, std::size_t c) { return v[r * side + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * side + c]; }
    std::size_t size() const { return v.size(); }
};

// Square complex-valued raster (SLM fields, focal fields).
struct ComplexImage {
    std::size_t side = 0;
    std::vector<cplx> v;

    ComplexImage() = default;
    explicit ComplexImage(std::size_t s) : side(s), v(s * s) {}

    cplx& at(std::size_t r, std::size_t c) { return v[r * side + c]; }
    cplx at(std::size_t r, std::size_t c) const { return v[r * side + c]; }
    std::size_t size() const { return v.size(); }
};

} // namespace wfsim
