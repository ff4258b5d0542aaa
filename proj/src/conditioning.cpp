#include "noisylab/conditioning.h"

#include <algorithm>
#include <set>
#include <sstream>

#include "noisylab/errors.h"

NOISYLAB_NAMESPACE_BEGIN

namespace {

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

ConditionSpace::ConditionSpace(std::vector<std::string> cameras, std::vector<std::uint32_t> isos)
    : cameras_(std::move(cameras)), isos_(std::move(isos)) {
  if (cameras_.empty() || isos_.empty()) throw ConditionError("condition space needs a camera and an ISO");
  for (auto iso : isos_) {
    if (!is_allowed_iso(iso)) throw ConditionError("ISO " + std::to_string(iso) + " is not in the allowed set");
  }
  if (std::set<std::string>(cameras_.begin(), cameras_.end()).size() != cameras_.size() ||
      std::set<std::uint32_t>(isos_.begin(), isos_.end()).size() != isos_.size()) {
    throw ConditionError("duplicate condition keys");
  }
}

ConditionSpace ConditionSpace::from_dataset(const Dataset& data) {
  std::set<std::string> cameras;
  std::set<std::uint32_t> isos;
  for (const auto& p : data.pairs) {
    cameras.insert(p.a.meta.camera_id);
    isos.insert(p.a.meta.iso);
  }
  if (cameras.empty()) throw DataError("empty dataset has no condition keys");
  return {{cameras.begin(), cameras.end()}, {isos.begin(), isos.end()}};
}

int ConditionSpace::camera_index(const std::string& camera) const {
  auto it = std::find(cameras_.begin(), cameras_.end(), camera);
  if (it == cameras_.end()) throw ConditionError("unseen camera '" + camera + "'");
  return static_cast<int>(it - cameras_.begin());
}

int ConditionSpace::iso_index(std::uint32_t iso) const {
  auto it = std::find(isos_.begin(), isos_.end(), iso);
  if (it == isos_.end()) throw ConditionError("unseen ISO " + std::to_string(iso));
  return static_cast<int>(it - isos_.begin());
}

Conditioning ConditionSpace::encode(std::span<const SceneMeta> metas) const {
  Conditioning c;
  for (const auto& m : metas) {
    c.camera.push_back(camera_index(m.camera_id));
    c.iso.push_back(iso_index(m.iso));
    c.joint.push_back(c.camera.back() * iso_count() + c.iso.back());
  }
  return c;
}

std::string ConditionSpace::describe() const {
  std::string out = "cameras=";
  for (std::size_t i = 0; i < cameras_.size(); ++i) out += (i ? "," : "") + cameras_[i];
  out += ";isos=";
  for (std::size_t i = 0; i < isos_.size(); ++i) out += (i ? "," : "") + std::to_string(isos_[i]);
  return out;
}

ConditionSpace ConditionSpace::parse(const std::string& text) {
  std::vector<std::string> cameras;
  std::vector<std::uint32_t> isos;
  for (const auto& field : split_list(text, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const auto key = field.substr(0, eq);
    const auto items = split_list(field.substr(eq + 1), ',');
    if (key == "cameras") {
      cameras = items;
    } else if (key == "isos") {
      for (const auto& s : items) {
        try {
          isos.push_back(static_cast<std::uint32_t>(std::stoul(s)));
        } catch (const std::exception&) {
          throw FormatError("bad ISO '" + s + "' in condition descriptor");
        }
      }
    }
  }
  return {cameras, isos};
}

Tensor stack_patches(std::span<const Tensor> patches) {
  if (patches.empty()) throw ShapeError("cannot stack zero patches");
  const Shape& shape = patches.front().shape();
  Shape out_shape{static_cast<std::int64_t>(patches.size())};
  out_shape.insert(out_shape.end(), shape.begin(), shape.end());
  std::vector<Real> values;
  values.reserve(static_cast<std::size_t>(shape_numel(out_shape)));
  for (const auto& p : patches) {
    if (p.shape() != shape) throw ShapeError("patch shapes differ: " + shape_str(p.shape()) + " vs " + shape_str(shape));
    values.insert(values.end(), p.values().begin(), p.values().end());
  }
  return Tensor(out_shape, std::move(values));
}

std::vector<Tensor> unstack_patches(const Tensor& batch) {
  if (batch.rank() < 2) throw ShapeError("unstack needs a batched tensor");
  Shape shape(batch.shape().begin() + 1, batch.shape().end());
  const auto per = shape_numel(shape);
  std::vector<Tensor> out;
  for (std::int64_t n = 0; n < batch.dim(0); ++n) {
    auto first = batch.values().begin() + n * per;
    out.emplace_back(shape, std::vector<Real>(first, first + per));
  }
  return out;
}

NOISYLAB_NAMESPACE_END
