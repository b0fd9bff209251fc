#include "fedsim/checkpoint.hpp"

#include <stdexcept>

#include "json_util.hpp"

namespace fedsim {

namespace {

detail::json spec_to_json(const ModelSpec& spec) {
  detail::json j;
  j["kind"] = to_string(spec.kind);
  j["feature_dim"] = spec.feature_dim;
  j["num_classes"] = spec.num_classes;
  if (spec.kind == ModelKind::mlp) j["hidden_dim"] = spec.hidden_dim;
  return j;
}

ModelSpec spec_from_json(const detail::json& j, const std::string& where) {
  ModelSpec spec;
  spec.kind = model_kind_from_string(detail::require_field<std::string>(j, "kind", where));
  spec.feature_dim = detail::require_field<int>(j, "feature_dim", where);
  spec.num_classes = detail::require_field<int>(j, "num_classes", where);
  if (spec.kind == ModelKind::mlp)
    spec.hidden_dim = detail::require_field<int>(j, "hidden_dim", where);
  spec.validate();
  return spec;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     const ParameterVector& params) {
  if (params.segments() != spec.layout())
    throw std::invalid_argument("checkpoint: parameters do not match spec layout");
  detail::json j;
  j["format_version"] = 1;
  j["spec"] = spec_to_json(spec);
  auto& segs = j["segments"] = detail::json::array();
  for (const auto& s : params.segments())
    segs.push_back({{"name", s.name}, {"shape", s.shape}});
  j["values"] = std::vector<double>(params.values().begin(), params.values().end());
  detail::write_text_file(path, j.dump());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto j = detail::read_json_file(path);
  const std::string where = "checkpoint " + path.string();
  const int version = detail::require_field<int>(j, "format_version", where);
  if (version != 1) throw std::runtime_error(where + ": unsupported format_version");

  Checkpoint out;
  if (!j.contains("spec")) throw std::runtime_error(where + ": missing spec");
  out.spec = spec_from_json(j.at("spec"), where);

  if (!j.contains("segments") || !j.at("segments").is_array())
    throw std::runtime_error(where + ": missing segments");
  std::vector<Segment> segments;
  for (const auto& s : j.at("segments")) {
    Segment seg;
    seg.name = detail::require_field<std::string>(s, "name", where);
    seg.shape = detail::require_field<std::vector<std::size_t>>(s, "shape", where);
    segments.push_back(std::move(seg));
  }
  if (segments != out.spec.layout())
    throw std::runtime_error(where + ": segments do not match the declared spec");

  auto values = detail::require_field<std::vector<double>>(j, "values", where);
  out.params = ParameterVector(std::move(segments), std::move(values));
  return out;
}

}  // namespace fedsim
