#include "snerf/serialize.hpp"

#include <initializer_list>
#include <string>

#include "json_util.hpp"
#include "snerf/errors.hpp"

namespace snerf {
using nlohmann::json;
using json_util::read;
using json_util::require_object;

void to_json(json& j, const Camera& c) {
  j = {{"width", c.width}, {"height", c.height}, {"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}};
}

void from_json(const json& j, Camera& c) {
  // camera.json in a dataset carries class metadata next to the intrinsics.
  require_object(j, "camera", {"width", "height", "fx", "fy", "cx", "cy", "num_classes", "class_names"});
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
}

void to_json(json& j, const Bounds& b) { j = {{"near", b.t_near}, {"far", b.t_far}}; }

void from_json(const json& j, Bounds& b) {
  require_object(j, "bounds", {"near", "far"});
  read(j, "near", b.t_near);
  read(j, "far", b.t_far);
}

void to_json(json& j, const EncodingConfig& c) {
  j = {{"pos_freqs", c.pos_freqs},
       {"dir_freqs", c.dir_freqs},
       {"include_raw_input", c.include_raw_input},
       {"position_scale", c.position_scale}};
}

void from_json(const json& j, EncodingConfig& c) {
  require_object(j, "encoding", {"pos_freqs", "dir_freqs", "include_raw_input", "position_scale"});
  read(j, "pos_freqs", c.pos_freqs);
  read(j, "dir_freqs", c.dir_freqs);
  read(j, "include_raw_input", c.include_raw_input);
  read(j, "position_scale", c.position_scale);
}

void to_json(json& j, const FieldConfig& c) {
  j = {{"encoding", c.encoding},
       {"trunk_depth", c.trunk_depth},
       {"trunk_width", c.trunk_width},
       {"head_width", c.head_width},
       {"skip_layer", c.skip_layer},
       {"num_classes", c.num_classes},
       {"density_activation", c.density_activation == DensityActivation::Softplus ? "softplus" : "relu"}};
}

void from_json(const json& j, FieldConfig& c) {
  require_object(j, "field", {"encoding", "trunk_depth", "trunk_width", "head_width", "skip_layer", "num_classes",
                              "density_activation"});
  read(j, "encoding", c.encoding);
  read(j, "trunk_depth", c.trunk_depth);
  read(j, "trunk_width", c.trunk_width);
  read(j, "head_width", c.head_width);
  read(j, "skip_layer", c.skip_layer);
  read(j, "num_classes", c.num_classes);
  if (j.contains("density_activation")) {
    const auto name = j.at("density_activation").get<std::string>();
    if (name == "softplus") {
      c.density_activation = DensityActivation::Softplus;
    } else if (name == "relu") {
      c.density_activation = DensityActivation::Relu;
    } else {
      throw ConfigError("field: density_activation must be \"softplus\" or \"relu\"");
    }
  }
}

void to_json(json& j, const RenderConfig& c) {
  j = {{"num_coarse", c.num_coarse}, {"num_fine", c.num_fine},
       {"bounds", c.bounds},         {"weight_eps", c.weight_eps},
       {"normalized_depth", c.normalized_depth}, {"threads", c.threads}};
}

void from_json(const json& j, RenderConfig& c) {
  require_object(j, "render", {"num_coarse", "num_fine", "bounds", "weight_eps", "normalized_depth", "threads"});
  read(j, "num_coarse", c.num_coarse);
  read(j, "num_fine", c.num_fine);
  read(j, "bounds", c.bounds);
  read(j, "weight_eps", c.weight_eps);
  read(j, "normalized_depth", c.normalized_depth);
  read(j, "threads", c.threads);
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"lambda_sem", c.lambda_sem},
       {"learning_rate", c.learning_rate},
       {"lr_decay", c.lr_decay},
       {"lr_final_fraction", c.lr_final_fraction},
       {"iterations", c.iterations},
       {"batch_size", c.batch_size},
       {"chunk_size", c.chunk_size},
       {"render", c.render},
       {"seed", c.seed},
       {"threads", c.threads},
       {"checkpoint_every", c.checkpoint_every},
       {"log_every", c.log_every},
       {"density_noise_std", c.density_noise_std}};
}

void from_json(const json& j, TrainConfig& c) {
  require_object(j, "train",
                 {"lambda_sem", "learning_rate", "lr_decay", "lr_final_fraction", "iterations", "batch_size",
                  "chunk_size", "render", "seed", "threads", "checkpoint_every", "log_every", "density_noise_std"});
  read(j, "lambda_sem", c.lambda_sem);
  read(j, "learning_rate", c.learning_rate);
  read(j, "lr_decay", c.lr_decay);
  read(j, "lr_final_fraction", c.lr_final_fraction);
  read(j, "iterations", c.iterations);
  read(j, "batch_size", c.batch_size);
  read(j, "chunk_size", c.chunk_size);
  read(j, "render", c.render);
  read(j, "seed", c.seed);
  read(j, "threads", c.threads);
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "log_every", c.log_every);
  read(j, "density_noise_std", c.density_noise_std);
}

void to_json(json& j, const SceneSpec& s) {
  j = {{"num_primitives", s.num_primitives},
       {"num_classes", s.num_classes},
       {"world_min", s.world_min},
       {"world_max", s.world_max},
       {"placement_radius", s.placement_radius},
       {"enclosed_room", s.enclosed_room},
       {"specular", s.specular}};
  j["single_class"] = s.single_class ? json(*s.single_class) : json(nullptr);
}

void from_json(const json& j, SceneSpec& s) {
  require_object(j, "scene", {"num_primitives", "num_classes", "world_min", "world_max", "placement_radius",
                              "enclosed_room", "single_class", "specular"});
  read(j, "num_primitives", s.num_primitives);
  read(j, "num_classes", s.num_classes);
  read(j, "world_min", s.world_min);
  read(j, "world_max", s.world_max);
  read(j, "placement_radius", s.placement_radius);
  read(j, "enclosed_room", s.enclosed_room);
  read(j, "specular", s.specular);
  if (j.contains("single_class")) {
    const json& v = j.at("single_class");
    s.single_class = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
  }
}

void to_json(json& j, const TrajectorySpec& s) {
  j = {{"num_poses", s.num_poses},
       {"radius_min", s.radius_min},
       {"radius_max", s.radius_max},
       {"elevation_min_deg", s.elevation_min_deg},
       {"elevation_max_deg", s.elevation_max_deg},
       {"sweep_deg", s.sweep_deg},
       {"target_jitter", s.target_jitter},
       {"centre", s.centre},
       {"seed", s.seed}};
}

void from_json(const json& j, TrajectorySpec& s) {
  require_object(j, "trajectory", {"num_poses", "radius_min", "radius_max", "elevation_min_deg", "elevation_max_deg",
                                   "sweep_deg", "target_jitter", "centre", "seed"});
  read(j, "num_poses", s.num_poses);
  read(j, "radius_min", s.radius_min);
  read(j, "radius_max", s.radius_max);
  read(j, "elevation_min_deg", s.elevation_min_deg);
  read(j, "elevation_max_deg", s.elevation_max_deg);
  read(j, "sweep_deg", s.sweep_deg);
  read(j, "target_jitter", s.target_jitter);
  read(j, "centre", s.centre);
  read(j, "seed", s.seed);
}

}  // namespace snerf

void nlohmann::adl_serializer<snerf::Vec3>::to_json(nlohmann::json& j, const snerf::Vec3& v) {
  j = nlohmann::json::array({v.x(), v.y(), v.z()});
}

void nlohmann::adl_serializer<snerf::Vec3>::from_json(const nlohmann::json& j, snerf::Vec3& v) {
  if (!j.is_array() || j.size() != 3) throw snerf::ConfigError("expected a 3-vector");
  for (int i = 0; i < 3; ++i) v(i) = j.at(i).get<double>();
}
