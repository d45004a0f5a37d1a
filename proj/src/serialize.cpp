#include "dwlif/serialize.hpp"

#include <string>

namespace dwlif {

void to_json(nlohmann::json& j, const TrackShape& shape) {
  j = nlohmann::json{{"kind", std::string(to_string(shape.kind))},
                     {"length", shape.length},
                     {"w_wide", shape.w_wide},
                     {"w_narrow", shape.w_narrow},
                     {"b", shape.b},
                     {"w1", shape.w1},
                     {"constriction_width", shape.constriction_width},
                     {"constriction_extent", shape.constriction_extent},
                     {"thickness", shape.thickness}};
}

void from_json(const nlohmann::json& j, TrackShape& shape) {
  const ShapeKind kind = shape_kind_from_string(j.at("kind").get<std::string>());
  ShapeParams p;
  p.length = j.value("length", p.length);
  p.w_wide = j.value("w_wide", p.w_wide);
  p.w_narrow = j.value("w_narrow", p.w_narrow);
  p.b = j.value("b", p.b);
  p.w1 = j.value("w1", p.w1);
  p.constriction_width = j.value("constriction_width", p.constriction_width);
  p.constriction_extent = j.value("constriction_extent", p.constriction_extent);
  p.thickness = j.value("thickness", p.thickness);
  shape = make_track_shape(kind, p);
}

void to_json(nlohmann::json& j, const MaterialParams& params) {
  j = nlohmann::json{{"a_ex", params.a_ex},   {"alpha", params.alpha},
                     {"xi", params.xi},       {"m_sat", params.m_sat},
                     {"ku1", params.ku1},     {"polarization", params.polarization},
                     {"gamma", params.gamma}};
}

void from_json(const nlohmann::json& j, MaterialParams& params) {
  MaterialParams p;
  p.a_ex = j.value("a_ex", p.a_ex);
  p.alpha = j.value("alpha", p.alpha);
  p.xi = j.value("xi", p.xi);
  p.m_sat = j.value("m_sat", p.m_sat);
  p.ku1 = j.value("ku1", p.ku1);
  p.polarization = j.value("polarization", p.polarization);
  p.gamma = j.value("gamma", p.gamma);
  p.validate();
  params = p;
}

}  // namespace dwlif
