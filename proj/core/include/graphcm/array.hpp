// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace graphcm::ad {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) { n *= d; }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i > 0) { os << ','; }
        os << s[i];
    }
    os << ']';
    return os.str();
}

// Dense row-major multi-dimensional array.
template <class T>
class Array {
  public:
    Array() = default;

    explicit Array(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
    }

    static Array from(Shape shape, std::vector<T> data) {
        Array a;
        a.shape_ = std::move(shape);
        a.validate_shape();
        if (static_cast<std::int64_t>(data.size()) != shape_numel(a.shape_)) {
            throw std::invalid_argument("Array::from: data size " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(a.shape_));
        }
        a.data_ = std::move(data);
        return a;
    }

    static Array scalar(T v) { return from({1}, {v}); }

    const Shape& shape() const { return shape_; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t dim(std::int64_t i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    T& at2(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * dim(1) + j)]; }
    const T& at2(std::int64_t i, std::int64_t j) const {
        return data_[static_cast<std::size_t>(i * dim(1) + j)];
    }
    T& at3(std::int64_t i, std::int64_t j, std::int64_t k) {
        return data_[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
    }
    const T& at3(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data_[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Array& o) const { return shape_ == o.shape_; }

    Array reshaped(Shape s) const {
        if (shape_numel(s) != numel()) {
            throw std::invalid_argument("Array::reshaped: cannot reshape " + shape_str(shape_) +
                                        " to " + shape_str(s));
        }
        Array a;
        a.shape_ = std::move(s);
        a.data_ = data_;
        return a;
    }

  private:
    void validate_shape() const {
        for (auto d : shape_) {
            if (d <= 0) {
                throw std::invalid_argument("Array: non-positive dimension in shape " +
                                            shape_str(shape_));
            }
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using IndexArray = Array<std::int64_t>;

}  // namespace graphcm::ad
