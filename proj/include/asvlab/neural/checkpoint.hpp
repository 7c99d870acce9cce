// Parameter checkpoints: "ASVCKPT" binary (dataset header convention, rows =
// tensor count) with one record per named tensor, plus a JSON manifest next
// to it (<file>.json) listing names, shapes and free-form metadata.
#pragma once

#include "asvlab/neural/graph.hpp"

#include <filesystem>

#include <json.hpp>

namespace asvlab::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path, const nlohmann::json& meta = {});

struct Checkpoint {
    ParamStore params;
    nlohmann::json meta;
};

/// Throws LoadError on missing files, bad magic/version or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies values for every parameter of `dst` found in `src` under
/// `src_prefix + suffix` where `dst` names are `dst_prefix + suffix`.
/// Throws LoadError on a missing name or shape mismatch.
void copy_parameters(const ParamStore& src, const std::string& src_prefix, ParamStore& dst,
                     const std::string& dst_prefix);

/// SHA-256 over names, shapes and values of parameters with the prefix.
std::string parameter_hash(const ParamStore& store, const std::string& prefix = "");

}  // namespace asvlab::nn
