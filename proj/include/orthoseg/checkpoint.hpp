#pragma once

#include "orthoseg/network.hpp"

#include <filesystem>

namespace orthoseg {

/// Trained model snapshot: architecture, the band order the network was fed
/// during training, and every parameter tensor (running stats included).
struct Checkpoint {
    NetworkConfig config;
    std::vector<BandId> bands;
    Parameters<float> params;
};

/// Binary container: magic, format version, a JSON header describing config,
/// bands and the array directory, then raw float32 payloads in directory
/// order. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace orthoseg
