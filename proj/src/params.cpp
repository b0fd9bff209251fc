#include "fedsim/params.hpp"

#include <cmath>
#include <stdexcept>

namespace fedsim {

std::size_t Segment::size() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::size_t total_size(const std::vector<Segment>& segments) {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.size();
  return n;
}

ParameterVector::ParameterVector(std::vector<Segment> segments, std::vector<double> values)
    : segments_(std::move(segments)), values_(std::move(values)) {
  for (const auto& s : segments_) {
    if (s.name.empty()) throw std::invalid_argument("parameter segment with empty name");
    if (s.shape.empty()) throw std::invalid_argument("parameter segment with empty shape");
    for (std::size_t d : s.shape)
      if (d == 0) throw std::invalid_argument("parameter segment with zero dimension");
  }
  if (values_.size() != total_size(segments_))
    throw std::invalid_argument("parameter value count does not match segment layout");
  for (double v : values_)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite parameter value");
}

}  // namespace fedsim
