#pragma once

// JSON mappings for the configuration and metadata types. Readers reject
// unknown keys and fall back to the field's default for absent ones.

#include <json.hpp>

#include "snerf/field.hpp"
#include "snerf/geometry.hpp"
#include "snerf/render.hpp"
#include "snerf/synthgen.hpp"
#include "snerf/train.hpp"

namespace snerf {

void to_json(nlohmann::json& j, const Camera& c);
void from_json(const nlohmann::json& j, Camera& c);

void to_json(nlohmann::json& j, const Bounds& b);
void from_json(const nlohmann::json& j, Bounds& b);

void to_json(nlohmann::json& j, const EncodingConfig& c);
void from_json(const nlohmann::json& j, EncodingConfig& c);

void to_json(nlohmann::json& j, const FieldConfig& c);
void from_json(const nlohmann::json& j, FieldConfig& c);

void to_json(nlohmann::json& j, const RenderConfig& c);
void from_json(const nlohmann::json& j, RenderConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);

void to_json(nlohmann::json& j, const TrajectorySpec& s);
void from_json(const nlohmann::json& j, TrajectorySpec& s);

}  // namespace snerf

// Vec3 lives in namespace Eigen, out of reach of argument-dependent lookup.
template <>
struct nlohmann::adl_serializer<snerf::Vec3> {
  static void to_json(nlohmann::json& j, const snerf::Vec3& v);
  static void from_json(const nlohmann::json& j, snerf::Vec3& v);
};
