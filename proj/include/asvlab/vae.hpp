// Convolutional beta-VAE over 180-ray scans.
//
// Encoder: conv stack (ReLU between layers) -> flatten -> linear head giving
// 2*latent values split as (mu, log sigma^2). Decoder: linear latent ->
// features, then the transposed conv stack in reverse order (ReLU between
// layers) and a final sigmoid. Parameter names start with "enc." and "dec.".
#pragma once

#include "asvlab/dataset.hpp"
#include "asvlab/neural/checkpoint.hpp"
#include "asvlab/neural/ops.hpp"
#include "asvlab/stats.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace asvlab::vae {

enum class Arch { shallow, deep };

const char* arch_name(Arch a);
/// Throws ConfigError for anything but "shallow" or "deep".
Arch parse_arch(const std::string& name);

struct VaeSpec {
    Arch arch = Arch::shallow;
    std::size_t latent_dim = 12;
    std::size_t input_length = 180;
    nn::PaddingMode padding = nn::PaddingMode::circular;

    std::vector<nn::Conv1dSpec> encoder_layers() const;
    /// Flattened width of the last encoder conv output.
    std::size_t feature_dim() const;
};

nlohmann::json spec_to_json(const VaeSpec& s);
VaeSpec spec_from_json(const nlohmann::json& j);

struct VaeModel {
    VaeSpec spec;
    double beta = 1.0;
    nn::ParamStore params;
};

/// Kaiming-uniform fan-in weights, zero biases, drawn from the init stream.
VaeModel make_vae(const VaeSpec& spec, double beta, std::uint64_t seed);

/// Adds encoder parameters named `prefix`+... to an existing store.
void add_encoder_parameters(nn::ParamStore& store, const VaeSpec& spec, Rng& rng, const std::string& prefix = "enc.");

struct EncoderOutput {
    nn::Var mu;      // (B, latent)
    nn::Var logvar;  // (B, latent)
};

/// x is (B, input_length) or (B, 1, input_length).
EncoderOutput encode(nn::Graph& g, const VaeSpec& spec, nn::ParamStore& params, nn::Var x,
                     const std::string& prefix = "enc.");
/// z (B, latent) -> reconstruction (B, input_length) in (0, 1).
nn::Var decode(nn::Graph& g, const VaeSpec& spec, nn::ParamStore& params, nn::Var z);

struct LatentDist {
    nn::Tensor mu;
    nn::Tensor logvar;
};

LatentDist encode(VaeModel& model, const nn::Tensor& x);
nn::Tensor decode(VaeModel& model, const nn::Tensor& z);
/// z = mu + exp(logvar / 2) * eps with eps ~ N(0, I).
nn::Tensor reparameterize(const LatentDist& dist, Rng& rng);

struct VaeTrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 64;
    int epochs = 25;
    bool keep_best = true;  // restore the best-validation parameters at the end
};

nlohmann::json train_config_to_json(const VaeTrainConfig& c);
VaeTrainConfig train_config_from_json(const nlohmann::json& j, VaeTrainConfig base = {});

struct EpochStats {
    int epoch = 0;
    nn::ElboTerms train;
    nn::ElboTerms val;
};

struct TrainResult {
    VaeModel model;
    std::vector<EpochStats> curve;
    int best_epoch = 0;
};

/// Adam over shuffled training rows; deterministic in `seed`. Throws
/// NumericError when the loss becomes non-finite.
TrainResult train_vae(const dataset::ScanDataset& ds, const VaeSpec& spec, double beta, const VaeTrainConfig& cfg,
                      std::uint64_t seed);

/// Mean per-sample ELBO terms over the given rows, using a fixed noise
/// stream for the latent samples.
nn::ElboTerms evaluate_rows(VaeModel& model, const dataset::ScanDataset& ds, const std::vector<std::size_t>& rows,
                            std::uint64_t noise_seed = 0);

struct SeedReport {
    std::vector<double> losses;  // total test loss per seed
    stats::Interval total;
};

/// Aggregates per-seed test losses; needs at least two models.
SeedReport evaluate_vae(std::vector<VaeModel>& models, const dataset::ScanDataset& ds);

struct LatentDiagnostics {
    std::vector<double> per_dim_kl;
    std::vector<double> mu_variance;
    std::size_t active_dims = 0;
};

inline constexpr double kActiveDimThreshold = 0.01;  // nats per dimension

LatentDiagnostics latent_diagnostics(VaeModel& model, const dataset::ScanDataset& ds,
                                     const std::vector<std::size_t>& rows);

/// CSV "row,mu_0..,logvar_0.." with one line per input row.
void export_latents(VaeModel& model, const dataset::ScanDataset& ds, const std::vector<std::size_t>& rows,
                    const std::filesystem::path& path);

void save_vae(const VaeModel& model, const std::filesystem::path& path, const nlohmann::json& extra = {});
/// Throws LoadError for missing/corrupt files or a checkpoint without VAE metadata.
VaeModel load_vae(const std::filesystem::path& path);

/// Rows [first, first+count) of `rows` as a (count, 1, cols) tensor.
nn::Tensor gather_rows(const dataset::ScanDataset& ds, const std::vector<std::size_t>& rows, std::size_t first,
                       std::size_t count);

}  // namespace asvlab::vae
