#include "snerf/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "snerf/errors.hpp"
#include "snerf/parallel.hpp"
#include "snerf/rng.hpp"

namespace snerf {
namespace {

const char* kObjectNames[] = {"chair", "table", "sofa", "lamp", "cabinet", "plant", "shelf", "bed"};

Vec3 random_colour(Rng& rng) {
  // Saturated but not extreme so every surface stays inside the sigmoid's comfortable range.
  const double hue = rng.uniform() * 6.0;
  const int sector = int(hue) % 6;
  const double f = hue - std::floor(hue);
  const double hi = rng.uniform(0.7, 0.9), lo = rng.uniform(0.1, 0.3);
  const double mid_up = lo + (hi - lo) * f, mid_down = hi - (hi - lo) * f;
  switch (sector) {
    case 0: return {hi, mid_up, lo};
    case 1: return {mid_down, hi, lo};
    case 2: return {lo, hi, mid_up};
    case 3: return {lo, mid_down, hi};
    case 4: return {mid_up, lo, hi};
    default: return {hi, lo, mid_down};
  }
}

bool inside(const Vec3& p, const Vec3& lo, const Vec3& hi, double tol = 1e-9) {
  return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
}

}  // namespace

void SceneSpec::validate() const {
  if (num_classes < 2) throw ConfigError("scene: num_classes must be >= 2 (background plus one foreground class)");
  if (num_classes > 255) throw ConfigError("scene: num_classes must be <= 255");
  if (num_primitives < 1) throw ConfigError("scene: num_primitives must be >= 1");
  if (num_primitives + 7 > 254) throw ConfigError("scene: too many primitives for 8-bit instance maps");
  if (!(world_max.array() > world_min.array()).all()) throw ConfigError("scene: empty world bounds");
  if (single_class && (*single_class < 1 || *single_class >= num_classes)) {
    throw ConfigError("scene: single_class must be a foreground class id");
  }
  if (!(placement_radius > 0.0)) throw ConfigError("scene: placement_radius must be positive");
}

void SceneModel::validate() const {
  std::set<int> instances;
  for (const auto& p : primitives) {
    if (p.class_id < 0 || p.class_id >= num_classes) throw ConfigError("scene: class id out of range");
    if (!instances.insert(p.instance_id).second) throw ConfigError("scene: duplicate instance id");
    if (const auto* s = std::get_if<Sphere>(&p.shape)) {
      if (!inside(s->center - Vec3::Constant(s->radius), world_min, world_max) ||
          !inside(s->center + Vec3::Constant(s->radius), world_min, world_max)) {
        throw ConfigError("scene: sphere outside world bounds");
      }
    } else if (const auto* b = std::get_if<Box>(&p.shape)) {
      if (!inside(b->min, world_min, world_max) || !inside(b->max, world_min, world_max)) {
        throw ConfigError("scene: box outside world bounds");
      }
    }
  }
}

bool SceneModel::operator==(const SceneModel& o) const {
  auto shape_eq = [](const Shape& a, const Shape& b) {
    if (a.index() != b.index()) return false;
    if (const auto* s = std::get_if<Sphere>(&a)) {
      const auto& t = std::get<Sphere>(b);
      return s->center == t.center && s->radius == t.radius;
    }
    if (const auto* x = std::get_if<Box>(&a)) {
      const auto& y = std::get<Box>(b);
      return x->min == y.min && x->max == y.max;
    }
    const auto& p = std::get<Plane>(a);
    const auto& q = std::get<Plane>(b);
    return p.normal == q.normal && p.offset == q.offset;
  };
  if (primitives.size() != o.primitives.size()) return false;
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const auto& a = primitives[i];
    const auto& b = o.primitives[i];
    if (!shape_eq(a.shape, b.shape) || a.class_id != b.class_id || a.instance_id != b.instance_id ||
        a.albedo != b.albedo) {
      return false;
    }
  }
  return num_classes == o.num_classes && class_names == o.class_names && background_class == o.background_class &&
         background_albedo == o.background_albedo && light.direction == o.light.direction &&
         light.ambient == o.light.ambient && world_min == o.world_min && world_max == o.world_max &&
         specular == o.specular && focus == o.focus;
}

SceneModel generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = Rng(seed).derive("scene");
  SceneModel scene;
  scene.num_classes = spec.num_classes;
  scene.world_min = spec.world_min;
  scene.world_max = spec.world_max;
  scene.specular = spec.specular ? 0.35 : 0.0;
  scene.background_class = 0;
  scene.background_albedo = Vec3(0.75, 0.72, 0.68);
  scene.light.direction = Vec3(rng.uniform(-0.4, 0.4), 1.0, rng.uniform(-0.4, 0.4)).normalized();
  scene.light.ambient = 0.35;

  const bool has_floor_class = spec.num_classes >= 3;
  const int first_object_class = has_floor_class ? 2 : 1;
  scene.class_names.push_back("background");
  if (has_floor_class) scene.class_names.push_back("floor");
  for (int c = first_object_class; c < spec.num_classes; ++c) {
    const int k = c - first_object_class;
    scene.class_names.push_back(k < 8 ? kObjectNames[k] : "class" + std::to_string(c));
  }

  // Per-class look: shape kind, size range and base colour, so instances of a class resemble each other.
  struct ClassStyle {
    bool sphere;
    Vec3 size;
    Vec3 colour;
  };
  std::vector<ClassStyle> styles(spec.num_classes);
  for (int c = first_object_class; c < spec.num_classes; ++c) {
    ClassStyle& s = styles[c];
    s.sphere = c != first_object_class && rng.uniform() < 0.35;
    s.size = Vec3(rng.uniform(0.22, 0.42), rng.uniform(0.3, 0.7), rng.uniform(0.22, 0.42));
    s.colour = random_colour(rng);
  }

  // Class sequence: the first object class twice, then cycle through all object classes.
  std::vector<int> object_classes;
  const int num_object_classes = spec.num_classes - first_object_class;
  for (int i = 0; i < spec.num_primitives; ++i) {
    if (spec.single_class) {
      object_classes.push_back(*spec.single_class);
    } else if (spec.num_primitives >= 4 && i < 2) {
      object_classes.push_back(first_object_class);
    } else {
      const int k = spec.num_primitives >= 4 ? i - 2 : i;
      object_classes.push_back(first_object_class + k % num_object_classes);
    }
  }

  const Vec3 centre = 0.5 * (spec.world_min + spec.world_max);
  const double floor_y = spec.world_min.y();
  struct Footprint {
    double x, z, r;
  };
  std::vector<Footprint> placed;
  int next_instance = 1;
  double max_height = 0.0;
  for (int i = 0; i < spec.num_primitives; ++i) {
    const int cls = object_classes[i];
    const ClassStyle& style = styles[cls];
    const Vec3 size = style.size.cwiseProduct(Vec3(rng.uniform(0.85, 1.15), rng.uniform(0.85, 1.15),
                                                   rng.uniform(0.85, 1.15)));
    const double radius = style.sphere ? 0.5 * std::min(size.x(), size.y()) : 0.5 * std::hypot(size.x(), size.z());
    bool ok = false;
    Footprint fp{};
    for (int attempt = 0; attempt < 2000 && !ok; ++attempt) {
      const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double rad = spec.placement_radius * std::sqrt(rng.uniform());
      fp = {centre.x() + rad * std::cos(ang), centre.z() + rad * std::sin(ang), radius};
      ok = std::all_of(placed.begin(), placed.end(), [&](const Footprint& q) {
        return std::hypot(fp.x - q.x, fp.z - q.z) > fp.r + q.r + 0.05;
      });
    }
    if (!ok) throw ConfigError("scene: cannot place " + std::to_string(spec.num_primitives) +
                               " non-overlapping objects within placement_radius");
    placed.push_back(fp);
    Primitive prim;
    if (style.sphere) {
      prim.shape = Sphere{Vec3(fp.x, floor_y + radius, fp.z), radius};
      max_height = std::max(max_height, 2.0 * radius);
    } else {
      prim.shape = Box{Vec3(fp.x - 0.5 * size.x(), floor_y, fp.z - 0.5 * size.z()),
                       Vec3(fp.x + 0.5 * size.x(), floor_y + size.y(), fp.z + 0.5 * size.z())};
      max_height = std::max(max_height, size.y());
    }
    prim.class_id = cls;
    prim.instance_id = next_instance++;
    prim.albedo = (style.colour + Vec3(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)))
                      .cwiseMax(0.0)
                      .cwiseMin(1.0);
    scene.primitives.push_back(prim);
  }

  if (spec.enclosed_room) {
    const int floor_class = has_floor_class ? 1 : 0;
    const Vec3 floor_albedo(0.45, 0.38, 0.30);
    auto add_plane = [&](Vec3 normal, double offset, int cls, Vec3 albedo) {
      Primitive p;
      p.shape = Plane{normal, offset};
      p.class_id = cls;
      p.instance_id = next_instance++;
      p.albedo = albedo;
      scene.primitives.push_back(p);
    };
    add_plane(Vec3::UnitY(), spec.world_min.y(), floor_class, floor_albedo);
    add_plane(-Vec3::UnitY(), -spec.world_max.y(), 0, Vec3(0.85, 0.85, 0.85));
    add_plane(Vec3::UnitX(), spec.world_min.x(), 0, Vec3(0.72, 0.70, 0.62));
    add_plane(-Vec3::UnitX(), -spec.world_max.x(), 0, Vec3(0.62, 0.68, 0.72));
    add_plane(Vec3::UnitZ(), spec.world_min.z(), 0, Vec3(0.70, 0.64, 0.70));
    add_plane(-Vec3::UnitZ(), -spec.world_max.z(), 0, Vec3(0.66, 0.72, 0.64));
  }
  scene.focus = Vec3(centre.x(), floor_y + 0.5 * std::max(max_height, 0.2), centre.z());
  scene.validate();
  return scene;
}

std::optional<double> intersect(const Shape& shape, const Ray& ray, Vec3* normal) {
  const Vec3& o = ray.origin;
  const Vec3& d = ray.direction;
  if (const auto* s = std::get_if<Sphere>(&shape)) {
    const Vec3 oc = o - s->center;
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - s->radius * s->radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double root = std::sqrt(disc);
    for (double t : {-b - root, -b + root}) {
      if (t >= ray.t_near && t <= ray.t_far) {
        if (normal) *normal = (o + t * d - s->center) / s->radius;
        return t;
      }
    }
    return std::nullopt;
  }
  if (const auto* bx = std::get_if<Box>(&shape)) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    int axis0 = -1, axis1 = -1;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(d(a)) < 1e-15) {
        if (o(a) < bx->min(a) || o(a) > bx->max(a)) return std::nullopt;
        continue;
      }
      double ta = (bx->min(a) - o(a)) / d(a);
      double tb = (bx->max(a) - o(a)) / d(a);
      if (ta > tb) std::swap(ta, tb);
      if (ta > t0) {
        t0 = ta;
        axis0 = a;
      }
      if (tb < t1) {
        t1 = tb;
        axis1 = a;
      }
    }
    if (t0 > t1) return std::nullopt;
    for (auto [t, axis] : {std::pair{t0, axis0}, std::pair{t1, axis1}}) {
      if (axis >= 0 && t >= ray.t_near && t <= ray.t_far) {
        if (normal) {
          *normal = Vec3::Zero();
          (*normal)(axis) = d(axis) > 0.0 ? -1.0 : 1.0;
        }
        return t;
      }
    }
    return std::nullopt;
  }
  const auto& p = std::get<Plane>(shape);
  const double denom = p.normal.dot(d);
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const double t = (p.offset - p.normal.dot(o)) / denom;
  if (t < ray.t_near || t > ray.t_far) return std::nullopt;
  if (normal) *normal = p.normal;
  return t;
}

double surface_distance(const Shape& shape, const Vec3& p) {
  if (const auto* s = std::get_if<Sphere>(&shape)) return std::abs((p - s->center).norm() - s->radius);
  if (const auto* b = std::get_if<Box>(&shape)) {
    const Vec3 c = 0.5 * (b->min + b->max);
    const Vec3 h = 0.5 * (b->max - b->min);
    const Vec3 q = (p - c).cwiseAbs() - h;
    const double outside = q.cwiseMax(0.0).norm();
    const double inside_d = std::min(q.maxCoeff(), 0.0);
    return std::abs(outside + inside_d);
  }
  const auto& pl = std::get<Plane>(shape);
  return std::abs(pl.normal.dot(p) - pl.offset);
}

Hit raycast_gt(const SceneModel& scene, const Ray& ray) {
  Hit hit;
  hit.depth = ray.t_far;
  hit.class_id = scene.background_class;
  hit.rgb = scene.background_albedo;
  double best = std::numeric_limits<double>::infinity();
  Vec3 best_normal = Vec3::Zero();
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    Vec3 n;
    const auto t = intersect(scene.primitives[i].shape, ray, &n);
    if (t && *t < best) {
      best = *t;
      best_normal = n;
      hit.primitive = int(i);
    }
  }
  if (hit.primitive < 0) return hit;
  const Primitive& prim = scene.primitives[hit.primitive];
  if (best_normal.dot(ray.direction) > 0.0) best_normal = -best_normal;
  hit.depth = best;
  hit.class_id = prim.class_id;
  hit.instance_id = prim.instance_id;
  hit.normal = best_normal;
  const double lambert = std::max(0.0, best_normal.dot(scene.light.direction));
  Vec3 rgb = prim.albedo * (scene.light.ambient + (1.0 - scene.light.ambient) * lambert);
  if (scene.specular > 0.0) {
    const Vec3 reflected = 2.0 * best_normal.dot(scene.light.direction) * best_normal - scene.light.direction;
    const double spec = std::pow(std::max(0.0, reflected.dot(-ray.direction)), 16.0);
    rgb += Vec3::Constant(scene.specular * spec);
  }
  hit.rgb = rgb.cwiseMax(0.0).cwiseMin(1.0);
  return hit;
}

void TrajectorySpec::validate() const {
  if (num_poses < 2) throw ConfigError("trajectory: num_poses must be >= 2");
  if (!(radius_min > 0.0) || radius_max < radius_min) throw ConfigError("trajectory: bad orbit radius range");
  if (elevation_min_deg > elevation_max_deg || elevation_min_deg < -80.0 || elevation_max_deg > 80.0) {
    throw ConfigError("trajectory: elevation range must lie within [-80, 80] degrees");
  }
  if (target_jitter < 0.0) throw ConfigError("trajectory: target_jitter must be >= 0");
}

std::vector<Pose> make_trajectory(const TrajectorySpec& spec) {
  spec.validate();
  Rng rng = Rng(spec.seed).derive("trajectory");
  constexpr double kPi = std::numbers::pi;
  auto wave = [&rng]() {
    // Smooth signal in [0, 1] built from two random low-frequency sinusoids.
    const double f1 = rng.uniform(0.5, 2.0), f2 = rng.uniform(2.0, 4.0);
    const double p1 = rng.uniform(0.0, 2 * kPi), p2 = rng.uniform(0.0, 2 * kPi);
    return [=](double s) { return 0.5 + 0.35 * std::sin(2 * kPi * f1 * s + p1) + 0.15 * std::sin(2 * kPi * f2 * s + p2); };
  };
  const auto radius_wave = wave();
  const auto elevation_wave = wave();
  const auto jx = wave(), jy = wave(), jz = wave();
  const double azimuth0 = rng.uniform(0.0, 2 * kPi);
  const double wobble = rng.uniform(0.0, 2 * kPi);

  std::vector<Pose> poses;
  poses.reserve(spec.num_poses);
  for (int i = 0; i < spec.num_poses; ++i) {
    const double s = double(i) / double(spec.num_poses - 1);
    const double radius = spec.radius_min + (spec.radius_max - spec.radius_min) * radius_wave(s);
    const double elevation =
        (spec.elevation_min_deg + (spec.elevation_max_deg - spec.elevation_min_deg) * elevation_wave(s)) * kPi / 180.0;
    const double azimuth = azimuth0 + spec.sweep_deg * kPi / 180.0 * s + 0.05 * std::sin(6 * kPi * s + wobble);
    const Vec3 eye = spec.centre + radius * Vec3(std::cos(elevation) * std::cos(azimuth), std::sin(elevation),
                                                 std::cos(elevation) * std::sin(azimuth));
    const Vec3 target =
        spec.centre + spec.target_jitter * Vec3(2 * jx(s) - 1, 0.5 * (2 * jy(s) - 1), 2 * jz(s) - 1);
    poses.push_back(Pose::look_at(eye, target));
  }
  return poses;
}

Dataset render_sequence(const SceneModel& scene, const Camera& camera, const std::vector<Pose>& trajectory,
                        Bounds bounds, int threads) {
  camera.validate();
  bounds.validate();
  if (trajectory.empty()) throw ConfigError("render_sequence: empty trajectory");
  Dataset ds;
  ds.camera = camera;
  ds.num_classes = scene.num_classes;
  ds.class_names = scene.class_names;
  ds.frames.resize(trajectory.size());
  parallel_for(trajectory.size(), resolve_threads(threads), [&](std::size_t f) {
    Frame& fr = ds.frames[f];
    fr.pose = trajectory[f];
    fr.rgb = RgbImage(camera.width, camera.height, 3);
    fr.labels = LabelImage(camera.width, camera.height, 1);
    fr.instances = LabelImage(camera.width, camera.height, 1);
    fr.depth = DepthImage(camera.width, camera.height, 1);
    for (int r = 0; r < camera.height; ++r) {
      for (int c = 0; c < camera.width; ++c) {
        const Hit hit = raycast_gt(scene, ray_for_pixel(camera, fr.pose, {c, r}, bounds));
        for (int ch = 0; ch < 3; ++ch) fr.rgb.at(c, r, ch) = float(hit.rgb(ch));
        fr.labels.at(c, r) = std::uint8_t(hit.class_id);
        fr.instances->at(c, r) = std::uint8_t(hit.instance_id);
        fr.depth->at(c, r) = float(hit.depth);
      }
    }
    quantize_rgb(fr.rgb);
  });
  return ds;
}

}  // namespace snerf
