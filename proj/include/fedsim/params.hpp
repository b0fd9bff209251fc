#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fedsim {

// One named tensor of a flat parameter vector, e.g. {"w", {2, 3}}.
struct Segment {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t size() const;
  bool operator==(const Segment&) const = default;
};

std::size_t total_size(const std::vector<Segment>& segments);

// Flat, segment-annotated model weights: the unit exchanged between clients
// and server. Immutable after construction; the constructor rejects
// layout/value-count mismatches and non-finite values.
class ParameterVector {
 public:
  ParameterVector() = default;
  ParameterVector(std::vector<Segment> segments, std::vector<double> values);

  const std::vector<Segment>& segments() const { return segments_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  // Two vectors are layout-compatible iff their segment lists are identical.
  bool layout_compatible(const ParameterVector& other) const {
    return segments_ == other.segments_;
  }

  bool operator==(const ParameterVector&) const = default;

 private:
  std::vector<Segment> segments_;
  std::vector<double> values_;
};

}  // namespace fedsim
