#include "drfn/tensor.hpp"

#include <cassert>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace drfn {

std::size_t shape_numel(const Shape& shape)
{
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    return os.str();
}

static void check_shape(const Shape& shape)
{
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
    for (auto d : shape)
        if (d == 0) throw std::invalid_argument("tensor dimension sizes must be >= 1, got " + shape_str(shape));
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape))
{
    check_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data))
{
    check_shape(shape_);
    if (shape_numel(shape_) != data_.size())
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str(shape_));
}

double& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w)
{
    assert(shape_.size() == 4);
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const
{
    assert(shape_.size() == 4);
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

double Tensor::item() const
{
    if (data_.size() != 1) throw std::invalid_argument("item() requires a single-element tensor, got " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const
{
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v)
{
    for (auto& x : data_) x = v;
}

Tensor& Tensor::operator+=(const Tensor& other)
{
    if (other.shape_ != shape_)
        throw std::invalid_argument("shape mismatch in +=: " + shape_str(shape_) + " vs " + shape_str(other.shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

bool Tensor::all_finite() const
{
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape())
        throw std::invalid_argument("max_abs_diff shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace drfn
