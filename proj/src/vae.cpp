#include "asvlab/vae.hpp"

#include "asvlab/error.hpp"
#include "asvlab/neural/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace asvlab::vae {

using nn::Conv1dSpec;
using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

namespace {

Conv1dSpec transposed(const Conv1dSpec& e) {
    Conv1dSpec t = e;
    t.in_channels = e.out_channels;
    t.out_channels = e.in_channels;
    return t;
}

std::string layer_name(const std::string& prefix, const char* kind, std::size_t i, const char* what) {
    return prefix + kind + std::to_string(i) + "." + what;
}

void zero_init(nn::Parameter& p) { p.value.fill(0.0); }

void add_decoder_parameters(ParamStore& store, const VaeSpec& spec, Rng& rng) {
    const auto layers = spec.encoder_layers();
    const std::size_t f = spec.feature_dim();
    nn::kaiming_uniform(store.add("dec.head.w", {f, spec.latent_dim}), spec.latent_dim, rng);
    zero_init(store.add("dec.head.b", {f}));
    for (std::size_t i = layers.size(); i-- > 0;) {
        const Conv1dSpec t = transposed(layers[i]);
        // Each output position receives about in*K/stride contributions.
        const std::size_t fan_in = std::max<std::size_t>(1, t.in_channels * t.kernel / t.stride);
        nn::kaiming_uniform(store.add(layer_name("dec.", "convt", i, "w"), {t.in_channels, t.out_channels, t.kernel}),
                            fan_in, rng);
        zero_init(store.add(layer_name("dec.", "convt", i, "b"), {t.out_channels}));
    }
}

}  // namespace

const char* arch_name(Arch a) { return a == Arch::shallow ? "shallow" : "deep"; }

Arch parse_arch(const std::string& name) {
    if (name == "shallow") {
        return Arch::shallow;
    }
    if (name == "deep") {
        return Arch::deep;
    }
    throw ConfigError("unknown VAE architecture '" + name + "' (expected shallow or deep)");
}

std::vector<Conv1dSpec> VaeSpec::encoder_layers() const {
    if (arch == Arch::shallow) {
        return {{1, 1, 45, 15, 15, padding}};
    }
    return {{1, 3, 45, 15, 15, padding}, {3, 2, 3, 1, 1, padding}, {2, 1, 3, 1, 1, padding}};
}

std::size_t VaeSpec::feature_dim() const {
    std::size_t len = input_length;
    std::size_t channels = 1;
    for (const auto& l : encoder_layers()) {
        len = l.output_length(len);
        channels = l.out_channels;
    }
    return len * channels;
}

nlohmann::json spec_to_json(const VaeSpec& s) {
    return {{"arch", arch_name(s.arch)},
            {"latent_dim", s.latent_dim},
            {"input_length", s.input_length},
            {"padding", s.padding == nn::PaddingMode::circular ? "circular" : "zeros"}};
}

VaeSpec spec_from_json(const nlohmann::json& j) {
    VaeSpec s;
    s.arch = parse_arch(j.value("arch", std::string("shallow")));
    s.latent_dim = j.value("latent_dim", s.latent_dim);
    s.input_length = j.value("input_length", s.input_length);
    const std::string pad = j.value("padding", std::string("circular"));
    if (pad != "circular" && pad != "zeros") {
        throw ConfigError("VAE padding must be 'circular' or 'zeros', got '" + pad + "'");
    }
    s.padding = pad == "circular" ? nn::PaddingMode::circular : nn::PaddingMode::zeros;
    if (s.latent_dim == 0) {
        throw ConfigError("VAE latent_dim must be positive");
    }
    // Validates the layer stack against the input length.
    s.feature_dim();
    return s;
}

void add_encoder_parameters(ParamStore& store, const VaeSpec& spec, Rng& rng, const std::string& prefix) {
    const auto layers = spec.encoder_layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        nn::kaiming_uniform(store.add(layer_name(prefix, "conv", i, "w"), {l.out_channels, l.in_channels, l.kernel}),
                            l.in_channels * l.kernel, rng);
        zero_init(store.add(layer_name(prefix, "conv", i, "b"), {l.out_channels}));
    }
    const std::size_t f = spec.feature_dim();
    nn::kaiming_uniform(store.add(prefix + "head.w", {2 * spec.latent_dim, f}), f, rng);
    zero_init(store.add(prefix + "head.b", {2 * spec.latent_dim}));
}

VaeModel make_vae(const VaeSpec& spec, double beta, std::uint64_t seed) {
    if (beta < 0.0) {
        throw ConfigError("beta must be >= 0");
    }
    VaeModel m;
    m.spec = spec;
    m.beta = beta;
    Rng rng(seed, streams::init);
    add_encoder_parameters(m.params, spec, rng);
    add_decoder_parameters(m.params, spec, rng);
    return m;
}

EncoderOutput encode(Graph& g, const VaeSpec& spec, ParamStore& params, Var x, const std::string& prefix) {
    const auto& xv = g.value(x);
    const std::size_t batch = xv.dim(0);
    if (xv.size() != batch * spec.input_length) {
        throw ShapeError("encode: expected (B, " + std::to_string(spec.input_length) + ") input, got " +
                         nn::shape_string(xv.shape));
    }
    Var h = xv.rank() == 3 ? x : nn::reshape(g, x, {batch, 1, spec.input_length});
    const auto layers = spec.encoder_layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = nn::conv1d(g, h, g.param(params.get(layer_name(prefix, "conv", i, "w"))),
                       g.param(params.get(layer_name(prefix, "conv", i, "b"))), layers[i]);
        if (i + 1 < layers.size()) {
            h = nn::relu(g, h);
        }
    }
    h = nn::reshape(g, h, {batch, spec.feature_dim()});
    Var head = nn::linear(g, h, g.param(params.get(prefix + "head.w")), g.param(params.get(prefix + "head.b")));
    return {nn::slice_columns(g, head, 0, spec.latent_dim),
            nn::slice_columns(g, head, spec.latent_dim, spec.latent_dim)};
}

Var decode(Graph& g, const VaeSpec& spec, ParamStore& params, Var z) {
    const auto& zv = g.value(z);
    if (zv.rank() != 2 || zv.dim(1) != spec.latent_dim) {
        throw ShapeError("decode: expected (B, " + std::to_string(spec.latent_dim) + ") latent, got " +
                         nn::shape_string(zv.shape));
    }
    const std::size_t batch = zv.dim(0);
    const auto layers = spec.encoder_layers();
    Var h = nn::linear(g, z, g.param(params.get("dec.head.w")), g.param(params.get("dec.head.b")));
    std::size_t len = spec.input_length;
    std::vector<std::size_t> lengths;
    for (const auto& l : layers) {
        len = l.output_length(len);
        lengths.push_back(len);
    }
    h = nn::reshape(g, h, {batch, layers.back().out_channels, lengths.back()});
    for (std::size_t i = layers.size(); i-- > 0;) {
        h = nn::conv_transpose1d(g, h, g.param(params.get(layer_name("dec.", "convt", i, "w"))),
                                 g.param(params.get(layer_name("dec.", "convt", i, "b"))), transposed(layers[i]));
        h = i == 0 ? nn::sigmoid(g, h) : nn::relu(g, h);
    }
    return nn::reshape(g, h, {batch, spec.input_length});
}

LatentDist encode(VaeModel& model, const Tensor& x) {
    Graph g;
    const auto out = encode(g, model.spec, model.params, g.constant(x));
    return {g.value(out.mu), g.value(out.logvar)};
}

Tensor decode(VaeModel& model, const Tensor& z) {
    Graph g;
    return g.value(decode(g, model.spec, model.params, g.constant(z)));
}

Tensor reparameterize(const LatentDist& dist, Rng& rng) {
    Tensor z(dist.mu.shape);
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = dist.mu[i] + std::exp(0.5 * dist.logvar[i]) * rng.normal();
    }
    return z;
}

nlohmann::json train_config_to_json(const VaeTrainConfig& c) {
    return {{"lr", c.lr}, {"batch_size", c.batch_size}, {"epochs", c.epochs}, {"keep_best", c.keep_best}};
}

VaeTrainConfig train_config_from_json(const nlohmann::json& j, VaeTrainConfig c) {
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.keep_best = j.value("keep_best", c.keep_best);
    if (c.lr <= 0.0 || c.batch_size == 0 || c.epochs < 1) {
        throw ConfigError("VAE training needs lr > 0, batch_size > 0 and epochs >= 1");
    }
    return c;
}

Tensor gather_rows(const dataset::ScanDataset& ds, const std::vector<std::size_t>& rows, std::size_t first,
                   std::size_t count) {
    Tensor t({count, 1, ds.cols});
    for (std::size_t b = 0; b < count; ++b) {
        const auto r = ds.row(rows[first + b]);
        std::copy(r.begin(), r.end(), t.data.begin() + static_cast<std::ptrdiff_t>(b * ds.cols));
    }
    return t;
}

namespace {

Tensor normal_noise(Rng& rng, std::size_t batch, std::size_t dim) {
    Tensor n({batch, dim});
    for (double& v : n.data) {
        v = rng.normal();
    }
    return n;
}

void accumulate(nn::ElboTerms& acc, const nn::ElboTerms& t, double weight) {
    acc.bce += weight * t.bce;
    acc.kl += weight * t.kl;
    acc.total += weight * t.total;
}

}  // namespace

nn::ElboTerms evaluate_rows(VaeModel& model, const dataset::ScanDataset& ds, const std::vector<std::size_t>& rows,
                            std::uint64_t noise_seed) {
    nn::ElboTerms acc;
    if (rows.empty()) {
        return acc;
    }
    Rng rng(noise_seed, streams::reparam, 1);
    constexpr std::size_t chunk = 256;
    for (std::size_t first = 0; first < rows.size(); first += chunk) {
        const std::size_t n = std::min(chunk, rows.size() - first);
        Graph g;
        Var x = g.constant(gather_rows(ds, rows, first, n));
        const auto enc = encode(g, model.spec, model.params, x);
        Var z = nn::reparameterize(g, enc.mu, enc.logvar, normal_noise(rng, n, model.spec.latent_dim));
        nn::ElboTerms t;
        nn::elbo_loss(g, x, decode(g, model.spec, model.params, z), enc.mu, enc.logvar, model.beta, &t);
        accumulate(acc, t, static_cast<double>(n) / static_cast<double>(rows.size()));
    }
    return acc;
}

TrainResult train_vae(const dataset::ScanDataset& ds, const VaeSpec& spec, double beta, const VaeTrainConfig& cfg,
                      std::uint64_t seed) {
    if (ds.cols != spec.input_length) {
        throw ShapeError("train_vae: dataset has " + std::to_string(ds.cols) + " columns, model expects " +
                         std::to_string(spec.input_length));
    }
    auto train_rows = ds.indices(dataset::Split::train);
    const auto val_rows = ds.indices(dataset::Split::val);
    if (train_rows.empty()) {
        throw ConfigError("train_vae: dataset has no training rows");
    }
    TrainResult result;
    result.model = make_vae(spec, beta, seed);
    VaeModel& model = result.model;
    const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
    Rng noise(seed, streams::reparam);
    const std::uint64_t eval_seed = substream_seed(seed, streams::reparam, 2);

    ParamStore best = model.params;
    double best_val = std::numeric_limits<double>::infinity();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle(seed, streams::shuffle, static_cast<std::uint64_t>(epoch));
        shuffle.shuffle(train_rows);
        EpochStats st;
        st.epoch = epoch;
        for (std::size_t first = 0; first < train_rows.size(); first += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, train_rows.size() - first);
            model.params.zero_grad();
            Graph g;
            Var x = g.constant(gather_rows(ds, train_rows, first, n));
            const auto enc = encode(g, model.spec, model.params, x);
            Var z = nn::reparameterize(g, enc.mu, enc.logvar, normal_noise(noise, n, spec.latent_dim));
            nn::ElboTerms t;
            Var loss = nn::elbo_loss(g, x, decode(g, model.spec, model.params, z), enc.mu, enc.logvar, beta, &t);
            if (!std::isfinite(t.total)) {
                throw NumericError("train_vae: non-finite loss at epoch " + std::to_string(epoch) + ", row offset " +
                                   std::to_string(first));
            }
            g.backward(loss);
            nn::adam_step(model.params, adam);
            accumulate(st.train, t, static_cast<double>(n) / static_cast<double>(train_rows.size()));
        }
        st.val = val_rows.empty() ? st.train : evaluate_rows(model, ds, val_rows, eval_seed);
        if (!std::isfinite(st.val.total)) {
            throw NumericError("train_vae: non-finite validation loss at epoch " + std::to_string(epoch));
        }
        if (st.val.total < best_val) {
            best_val = st.val.total;
            best = model.params;
            result.best_epoch = epoch;
        }
        result.curve.push_back(st);
    }
    if (cfg.keep_best) {
        model.params = best;
    }
    return result;
}

SeedReport evaluate_vae(std::vector<VaeModel>& models, const dataset::ScanDataset& ds) {
    const auto rows = ds.indices(dataset::Split::test);
    SeedReport rep;
    for (auto& m : models) {
        rep.losses.push_back(evaluate_rows(m, ds, rows).total);
    }
    rep.total = stats::confidence_interval(rep.losses);
    return rep;
}

LatentDiagnostics latent_diagnostics(VaeModel& model, const dataset::ScanDataset& ds,
                                     const std::vector<std::size_t>& rows) {
    const std::size_t d = model.spec.latent_dim;
    LatentDiagnostics out;
    out.per_dim_kl.assign(d, 0.0);
    out.mu_variance.assign(d, 0.0);
    if (rows.empty()) {
        return out;
    }
    std::vector<double> mu_sum(d, 0.0), mu_sq(d, 0.0);
    constexpr std::size_t chunk = 256;
    for (std::size_t first = 0; first < rows.size(); first += chunk) {
        const std::size_t n = std::min(chunk, rows.size() - first);
        const auto dist = encode(model, gather_rows(ds, rows, first, n));
        const auto kl = nn::kl_per_dimension(dist.mu, dist.logvar);
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t j = 0; j < d; ++j) {
                const double mu = dist.mu[b * d + j];
                out.per_dim_kl[j] += kl[b * d + j];
                mu_sum[j] += mu;
                mu_sq[j] += mu * mu;
            }
        }
    }
    const double n = static_cast<double>(rows.size());
    for (std::size_t j = 0; j < d; ++j) {
        out.per_dim_kl[j] /= n;
        const double mean = mu_sum[j] / n;
        out.mu_variance[j] = std::max(0.0, mu_sq[j] / n - mean * mean);
        out.active_dims += out.per_dim_kl[j] > kActiveDimThreshold ? 1 : 0;
    }
    return out;
}

void export_latents(VaeModel& model, const dataset::ScanDataset& ds, const std::vector<std::size_t>& rows,
                    const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    const std::size_t d = model.spec.latent_dim;
    out << "row";
    for (std::size_t j = 0; j < d; ++j) {
        out << ",mu_" << j;
    }
    for (std::size_t j = 0; j < d; ++j) {
        out << ",logvar_" << j;
    }
    out << '\n';
    out.precision(9);
    constexpr std::size_t chunk = 256;
    for (std::size_t first = 0; first < rows.size(); first += chunk) {
        const std::size_t n = std::min(chunk, rows.size() - first);
        const auto dist = encode(model, gather_rows(ds, rows, first, n));
        for (std::size_t b = 0; b < n; ++b) {
            out << rows[first + b];
            for (std::size_t j = 0; j < d; ++j) {
                out << ',' << dist.mu[b * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
                out << ',' << dist.logvar[b * d + j];
            }
            out << '\n';
        }
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

void save_vae(const VaeModel& model, const std::filesystem::path& path, const nlohmann::json& extra) {
    nlohmann::json meta = {{"kind", "vae"}, {"spec", spec_to_json(model.spec)}, {"beta", model.beta}};
    if (!extra.is_null()) {
        meta["extra"] = extra;
    }
    nn::save_checkpoint(model.params, path, meta);
}

VaeModel load_vae(const std::filesystem::path& path) {
    auto ck = nn::load_checkpoint(path);
    if (ck.meta.value("kind", std::string()) != "vae" || !ck.meta.contains("spec")) {
        throw LoadError(path.string() + ": not a VAE checkpoint (missing manifest metadata)");
    }
    VaeModel m;
    try {
        m.spec = spec_from_json(ck.meta.at("spec"));
        m.beta = ck.meta.value("beta", 1.0);
    } catch (const ConfigError& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
    // Check names and shapes against a freshly built model.
    VaeModel ref = make_vae(m.spec, m.beta, 0);
    nn::copy_parameters(ck.params, "", ref.params, "");
    m.params = std::move(ref.params);
    return m;
}

}  // namespace asvlab::vae
