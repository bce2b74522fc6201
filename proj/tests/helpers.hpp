#pragma once

#include <filesystem>
#include <string>

#include "cdl/rng.hpp"
#include "cdl/tensor.hpp"

namespace testing {

inline cdl::Tensor random_tensor(cdl::Rng& rng, cdl::Shape shape, double lo = -1.0, double hi = 1.0) {
  cdl::Tensor t(std::move(shape));
  for (double& v : t.values()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cdl_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
