#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "fedhorizon/model.hpp"
#include "fedhorizon/random.hpp"

namespace fedhorizon::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fedhorizon-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<Example> random_examples(Rng& rng, std::size_t n, std::size_t dim,
                                            std::size_t classes) {
  std::vector<Example> out(n);
  for (auto& ex : out) {
    ex.features.resize(dim);
    for (auto& v : ex.features) v = rng.normal();
    ex.label = static_cast<std::size_t>(rng.below(classes));
  }
  return out;
}

inline ParameterVector random_params(Rng& rng, std::size_t count, double scale = 1.0) {
  ParameterVector p(count);
  for (std::size_t i = 0; i < count; ++i) p[i] = scale * rng.normal();
  return p;
}

}  // namespace fedhorizon::testing
