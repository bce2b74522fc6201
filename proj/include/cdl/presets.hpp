#pragma once

// Bundled schema + config + data recipes: the plain GAN and CycleGAN
// schemas on small 2-d toy data, and the circles/stripes product task.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cdl/data.hpp"
#include "cdl/train.hpp"

namespace cdl {

struct Preset {
  std::string name;
  std::string schema_text;
  std::string config_text;
};

const std::vector<std::string>& preset_names();
// Throws ValidationError for unknown names.
Preset get_preset(const std::string& name);

// Circles sizes used by the preset's in-memory data.
inline constexpr std::size_t kCirclesSamples = 200;
inline constexpr std::size_t kCirclesSide = 16;

// A -> circles, B -> stripes, AB -> composed images, AxB = A x B.
DatasetFunctor circles_dataset_functor(const CirclesDataset& d);

// In-memory data for a preset (circles: 200 images per set, side 16).
DatasetFunctor preset_dataset(const std::string& name, std::uint64_t seed);

// Everything needed to train, resolved from schema and config text.
struct Experiment {
  std::shared_ptr<const Schema> schema;
  ExperimentConfig config;
  std::shared_ptr<const ArchAssignment> arch;
  std::shared_ptr<const DiscriminatorAssignment> discs;
  std::vector<Path> identity_paths;
};

Experiment build_experiment(const std::string& schema_text, const std::string& config_text);
TrainSetup make_setup(const Experiment& e, DatasetFunctor data);

}  // namespace cdl
