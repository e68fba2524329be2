#pragma once

#include <cstdint>
#include <string>

#include "pbu/model.hpp"

namespace pbu {

struct CheckpointMeta {
    std::uint64_t seed = 0;
    int epochs = 0;
    double final_loss = 0.0;
    bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
    ModelSpec spec;
    ParamVector theta;
    CheckpointMeta meta;
    bool operator==(const Checkpoint&) const = default;
};

/// Text format, round-trip exact:
///   PBUCKPT v1
///   d=<int> hidden=<int,int,...> classes=<int>
///   m=<int>
///   <m parameter lines, 17 significant digits>
///   meta seed=<u64> epochs=<int> final_loss=<float>
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pbu
