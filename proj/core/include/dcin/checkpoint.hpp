#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "dcin/model.hpp"

namespace dcin {

inline constexpr const char* kCheckpointSchema = "dcin-ckpt/v1";

// Content hash (FNV-1a over the raw bytes of every tensor in registration
// order). Any parameter change alters it; interest caches carry it as their
// staleness guard.
std::uint64_t param_digest(const ParameterStore& store);

// Single versioned text file: kind tag, schema, dims, flags, the training
// config as one JSON line, an RNG digest, and every tensor with a shape
// header. Values are written as hexfloats so reload is bit-exact.
void save_checkpoint(const std::string& path, const Model& model,
                     const std::string& config_json = "{}", std::uint64_t rng_digest = 0);

std::unique_ptr<Model> load_checkpoint(const std::string& path,
                                       std::string* config_json = nullptr);

}  // namespace dcin
