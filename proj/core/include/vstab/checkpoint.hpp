#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "vstab/stability.hpp"
#include "vstab/vae.hpp"

namespace vstab {

// Everything the online pipeline needs: the trained model plus, once fitted,
// the alignment map and the sampling temperature.
struct Checkpoint {
  VaeModel model;
  std::optional<AlignmentMap> alignment;
  std::optional<double> phi;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vstab
