// Acceptance checks. `acceptance <name>` runs one check, `acceptance all`
// runs every check in order. Each prints "PASS <name>: ..." or
// "FAIL <name>: ..." and the exit status is non-zero on any failure.

#include "asvlab/agent.hpp"
#include "asvlab/dataset.hpp"
#include "asvlab/guidance.hpp"
#include "asvlab/io.hpp"
#include "asvlab/neural/ops.hpp"
#include "asvlab/stats.hpp"
#include "asvlab/vae.hpp"
#include "asvlab/world.hpp"

#include "gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace asvlab;
using nn::Conv1dSpec;
using nn::Graph;
using nn::PaddingMode;
using nn::Tensor;
using nn::Var;
using testing::check_gradients;
using testing::random_nonzero;
using testing::random_tensor;

namespace {

constexpr double kPi = std::numbers::pi;

/// Collects named sub-checks; the criterion passes when all of them do.
class Report {
public:
    void check(bool ok, const std::string& what) {
        lines_.push_back((ok ? "  ok   " : "  FAIL ") + what);
        pass_ = pass_ && ok;
    }
    void note(const std::string& what) { lines_.push_back("  note " + what); }
    bool passed() const { return pass_; }
    void print() const {
        for (const auto& l : lines_) {
            std::cout << l << '\n';
        }
    }

private:
    std::vector<std::string> lines_;
    bool pass_ = true;
};

template <typename... Ts>
std::string fmt(const Ts&... parts) {
    std::ostringstream s;
    s.precision(6);
    (s << ... << parts);
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("asvlab_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

double dot(const Tensor& a, const Tensor& b) { return std::inner_product(a.data.begin(), a.data.end(), b.data.begin(), 0.0); }

Tensor roll(const Tensor& x, std::ptrdiff_t shift) {
    Tensor out(x.shape);
    const auto len = static_cast<std::ptrdiff_t>(x.shape.back());
    const std::size_t rows = x.size() / x.shape.back();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::ptrdiff_t t = 0; t < len; ++t) {
            out[r * static_cast<std::size_t>(len) + static_cast<std::size_t>(((t + shift) % len + len) % len)] =
                x[r * static_cast<std::size_t>(len) + static_cast<std::size_t>(t)];
        }
    }
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

Tensor conv(const Tensor& x, const Tensor& w, const Conv1dSpec& spec) {
    Graph g;
    return g.value(nn::conv1d(g, g.constant(x), g.constant(w), g.constant(Tensor({spec.out_channels})), spec));
}

/// Transposed layer sharing the forward weights.
Tensor convt(const Tensor& y, const Tensor& w, const Conv1dSpec& fwd) {
    Conv1dSpec t = fwd;
    t.in_channels = fwd.out_channels;
    t.out_channels = fwd.in_channels;
    Graph g;
    return g.value(nn::conv_transpose1d(g, g.constant(y), g.constant(w), g.constant(Tensor({t.out_channels})), t));
}

const Conv1dSpec kShallow{1, 1, 45, 15, 15, PaddingMode::circular};
const Conv1dSpec kDeep1{1, 3, 45, 15, 15, PaddingMode::circular};
const Conv1dSpec kDeep2{3, 2, 3, 1, 1, PaddingMode::circular};
const Conv1dSpec kDeep3{2, 1, 3, 1, 1, PaddingMode::circular};

// Desk-scale dataset: 2000 base scans, 6000 rows after rotation copies.
dataset::ScanDataset desk_dataset(std::uint64_t seed) {
    dataset::DatasetConfig cfg;
    cfg.n_pilot = 1000;
    cfg.n_synth_mixed = 500;
    cfg.n_synth_dynamic = 250;
    cfg.n_synth_static = 250;
    cfg.seed = seed;
    return dataset::build_dataset(cfg);
}

// ---------------------------------------------------------------- 1

bool gradients(Report& rep) {
    Rng rng(101);
    auto record = [&](const std::string& name, const testing::GradCheckResult& r, double tol) {
        rep.check(r.max_rel_error <= tol, fmt(name, ": max rel error ", r.max_rel_error, " over ", r.checked,
                                              " entries (tol ", tol, ")"));
    };

    const auto proj = random_tensor({4, 5}, rng);
    record("relu", check_gradients([&](Graph& g, const std::vector<Var>& v) {
               return nn::weighted_sum(g, nn::relu(g, v[0]), proj);
           }, {random_nonzero({4, 5}, rng)}), 1e-5);
    record("sigmoid", check_gradients([&](Graph& g, const std::vector<Var>& v) {
               return nn::weighted_sum(g, nn::sigmoid(g, v[0]), proj);
           }, {random_tensor({4, 5}, rng, -3, 3)}), 1e-5);
    const auto lproj = random_tensor({4, 3}, rng);
    record("linear", check_gradients([&](Graph& g, const std::vector<Var>& v) {
               return nn::weighted_sum(g, nn::linear(g, v[0], v[1], v[2]), lproj);
           }, {random_tensor({4, 5}, rng), random_tensor({3, 5}, rng), random_tensor({3}, rng)}), 1e-5);

    for (const auto& spec : {kShallow, kDeep1, kDeep2}) {
        const std::size_t len = spec.kernel == 45 ? 180 : 12;
        const std::size_t out = spec.output_length(len);
        const auto p = random_tensor({2, spec.out_channels, out}, rng);
        record(fmt("circular conv ", spec.in_channels, "->", spec.out_channels, " k", spec.kernel),
               check_gradients([&](Graph& g, const std::vector<Var>& v) {
                   return nn::weighted_sum(g, nn::conv1d(g, v[0], v[1], v[2], spec), p);
               }, {random_tensor({2, spec.in_channels, len}, rng),
                   random_tensor({spec.out_channels, spec.in_channels, spec.kernel}, rng),
                   random_tensor({spec.out_channels}, rng)}), 1e-5);

        Conv1dSpec t = spec;
        std::swap(t.in_channels, t.out_channels);
        const auto tp = random_tensor({2, t.out_channels, len}, rng);
        record(fmt("circular transposed conv ", t.in_channels, "->", t.out_channels, " k", t.kernel),
               check_gradients([&](Graph& g, const std::vector<Var>& v) {
                   return nn::weighted_sum(g, nn::conv_transpose1d(g, v[0], v[1], v[2], t), tp);
               }, {random_tensor({2, t.in_channels, out}, rng),
                   random_tensor({spec.out_channels, spec.in_channels, spec.kernel}, rng),
                   random_tensor({t.out_channels}, rng)}), 1e-5);
    }

    const auto noise = random_tensor({3, 2}, rng);
    const auto rproj = random_tensor({3, 2}, rng);
    record("reparameterize", check_gradients([&](Graph& g, const std::vector<Var>& v) {
               return nn::weighted_sum(g, nn::reparameterize(g, v[0], v[1], noise), rproj);
           }, {random_tensor({3, 2}, rng), random_tensor({3, 2}, rng)}), 1e-5);

    const auto target = random_tensor({3, 6}, rng, 0.0, 1.0);
    for (double beta : {0.0, 1.0, 5.0}) {
        record(fmt("elbo beta=", beta), check_gradients([&](Graph& g, const std::vector<Var>& v) {
                   return nn::elbo_loss(g, g.constant(target), nn::sigmoid(g, v[0]), v[1], v[2], beta);
               }, {random_tensor({3, 6}, rng, -2, 2), random_tensor({3, 2}, rng), random_tensor({3, 2}, rng)}),
               1e-5);
    }

    const std::size_t n = 9;
    nn::PpoBatch batch{random_tensor({n, 2}, rng), Tensor({n}), random_tensor({n}, rng), random_tensor({n}, rng)};
    const auto mean0 = random_tensor({n, 2}, rng, -0.3, 0.3);
    const auto ls0 = random_tensor({2}, rng, -0.5, 0.0);
    // Ratios on both sides of the clip range, away from its edges.
    for (std::size_t b = 0; b < n; ++b) {
        const double lp = nn::gaussian_log_prob(std::span(&batch.actions.data[b * 2], 2),
                                                std::span(&mean0.data[b * 2], 2), ls0.values());
        batch.old_log_prob[b] = lp - (b % 3 == 0 ? 0.5 : b % 3 == 1 ? -0.5 : 0.05);
    }
    record("ppo loss", check_gradients([&](Graph& g, const std::vector<Var>& v) {
               return nn::ppo_loss(g, v[0], v[1], v[2], batch, nn::PpoLossConfig{});
           }, {mean0, ls0, random_tensor({n, 1}, rng)}), 1e-5);

    for (auto arch : {vae::Arch::shallow, vae::Arch::deep}) {
        vae::VaeSpec spec;
        spec.arch = arch;
        vae::VaeModel m = vae::make_vae(spec, 1.0, 17);
        for (auto* p : m.params.all()) {
            // Nonzero biases keep ReLU inputs away from the kink.
            if (p->value.rank() == 1) {
                for (double& v : p->value.data) {
                    v = rng.uniform(-0.1, 0.1);
                }
            }
        }
        const Tensor x = random_tensor({2, 1, 180}, rng, 0.0, 1.0);
        const Tensor eps = random_tensor({2, 12}, rng);
        auto build = [&](Graph& g) {
            Var xv = g.constant(x);
            const auto enc = vae::encode(g, m.spec, m.params, xv);
            Var z = nn::reparameterize(g, enc.mu, enc.logvar, eps);
            return nn::elbo_loss(g, xv, vae::decode(g, m.spec, m.params, z), enc.mu, enc.logvar, 1.0);
        };
        record(fmt("end-to-end ", vae::arch_name(arch), " vae"),
               testing::check_parameter_gradients(m.params, build, 1e-4), 1e-4);
    }
    return rep.passed();
}

// ---------------------------------------------------------------- 2

bool adjointness(Report& rep) {
    Rng rng(202);
    for (const auto& spec : {kShallow, kDeep1, kDeep2, kDeep3}) {
        const std::size_t len = spec.kernel == 45 ? 180 : 12;
        double worst = 0.0;
        for (int draw = 0; draw < 100; ++draw) {
            const auto x = random_tensor({2, spec.in_channels, len}, rng);
            const auto w = random_tensor({spec.out_channels, spec.in_channels, spec.kernel}, rng);
            const auto y = random_tensor({2, spec.out_channels, spec.output_length(len)}, rng);
            const double gap = std::abs(dot(conv(x, w, spec), y) - dot(x, convt(y, w, spec)));
            worst = std::max(worst, gap / std::sqrt(dot(x, x) * dot(y, y)));
        }
        rep.check(worst <= 1e-10, fmt("conv ", spec.in_channels, "->", spec.out_channels, " k", spec.kernel, " s",
                                      spec.stride, ": max |<Cx,y>-<x,C'y>|/(|x||y|) = ", worst, " over 100 draws"));
    }

    // Paired shift test on the transposed layer: one latent step is one stride.
    const auto y = random_tensor({1, 1, 12}, rng);
    const auto w = random_tensor({1, 1, 45}, rng);
    const double circ = max_abs_diff(convt(roll(y, 1), w, kShallow), roll(convt(y, w, kShallow), 15));
    Conv1dSpec zero = kShallow;
    zero.mode = PaddingMode::zeros;
    const double zpad = max_abs_diff(convt(roll(y, 1), w, zero), roll(convt(y, w, zero), 15));
    rep.check(circ <= 1e-12, fmt("circular transposed conv is shift-equivariant (deviation ", circ, ")"));
    rep.check(zpad > 1e-3, fmt("zero-padded transposed conv fails the shift test (deviation ", zpad, ")"));
    return rep.passed();
}

// ---------------------------------------------------------------- 3

bool shapes(Report& rep) {
    Rng rng(303);
    for (auto arch : {vae::Arch::shallow, vae::Arch::deep}) {
        vae::VaeSpec spec;
        spec.arch = arch;
        vae::VaeModel m = vae::make_vae(spec, 1.0, 1);
        const Tensor x = random_tensor({7, 1, 180}, rng, 0.0, 1.0);
        const auto dist = vae::encode(m, x);
        const Tensor xh = vae::decode(m, dist.mu);
        rep.check(spec.feature_dim() == 12, fmt(vae::arch_name(arch), " conv features: ", spec.feature_dim()));
        rep.check(dist.mu.shape == nn::Shape{7, 12} && dist.logvar.shape == nn::Shape{7, 12},
                  fmt(vae::arch_name(arch), " encoder (7,1,180) -> mu, logvar (7,12)"));
        rep.check(xh.shape == nn::Shape{7, 180}, fmt(vae::arch_name(arch), " decoder (7,12) -> (7,180)"));
    }
    return rep.passed();
}

// ---------------------------------------------------------------- 4

bool inside(const world::Obstacle& o, const dynamics::Vec2& p) { return world::distance_to(o, p) == 0.0; }

std::optional<double> march(const dynamics::Vec2& dir, const world::Obstacle& o, double max_t) {
    const dynamics::Vec2 origin(0, 0);
    const bool start_inside = inside(o, origin);
    for (double t = 0.01; t <= max_t; t += 0.01) {
        if (inside(o, origin + t * dir) != start_inside) {
            return t;
        }
    }
    return std::nullopt;
}

double scan_distance(const guidance::Path& path, const dynamics::Vec2& p) {
    double best = (path.point(path.length()) - p).norm();
    const auto n = static_cast<long>(path.length() / 0.01);
    for (long i = 0; i <= n; ++i) {
        best = std::min(best, (path.point(static_cast<double>(i) * 0.01) - p).norm());
    }
    return best;
}

bool geometry(Report& rep) {
    Rng rng(404);
    double ray_worst = 0.0;
    int ray_mismatch = 0;
    int hits = 0;
    for (int i = 0; i < 1000; ++i) {
        const dynamics::Vec2 c(rng.uniform(-60, 60), rng.uniform(-60, 60));
        const world::Obstacle o = i % 2 == 0
                                      ? world::Obstacle::circle(c, rng.uniform(1, 30))
                                      : world::Obstacle::rectangle(c, rng.uniform(2, 40), rng.uniform(2, 20),
                                                                   rng.uniform(-kPi, kPi));
        // Mostly aimed near the obstacle so that hits and grazing misses dominate.
        const double a = i % 5 == 0 ? rng.uniform(-kPi, kPi) : std::atan2(c.y(), c.x()) + rng.uniform(-0.6, 0.6);
        const dynamics::Vec2 dir(std::cos(a), std::sin(a));
        const auto t = world::ray_obstacle({0, 0}, dir, o);
        const auto m = march(dir, o, 160.0);
        if (t.has_value() != m.has_value()) {
            ++ray_mismatch;
        } else if (t) {
            ++hits;
            ray_worst = std::max(ray_worst, std::abs(*t - *m));
        }
    }
    rep.check(ray_mismatch == 0 && ray_worst <= 0.02,
              fmt("ray casting: ", hits, " hits, ", ray_mismatch, " hit/miss disagreements, max error ", ray_worst, " m"));

    double cte_worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto path = guidance::generate_path(rng);
        const dynamics::Vec2 p = path.point(rng.uniform(0, path.length())) +
                                 dynamics::Vec2(rng.uniform(-80, 80), rng.uniform(-80, 80));
        cte_worst = std::max(cte_worst, std::abs(std::abs(guidance::cross_track_error(path, p)) - scan_distance(path, p)));
    }
    rep.check(cte_worst <= 0.02, fmt("cross-track error: max deviation from 0.01 m scan ", cte_worst, " m over 1000 paths"));
    return rep.passed();
}

// ---------------------------------------------------------------- CLI helpers

std::string cli() { return ASVLAB_CLI_PATH; }

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = cli() + " " + args + " > " + log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return rc;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ---------------------------------------------------------------- 5

bool dataset_pipeline(Report& rep) {
    const fs::path dir = scratch("dataset");
    const auto t0 = std::chrono::steady_clock::now();
    const int rc = run_cli("gen-data --out " + dir.string(), dir / "log.txt");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.check(rc == 0, fmt("default gen-data exit status ", rc, " (", secs, " s)"));
    if (rc != 0) {
        rep.note(slurp(dir / "log.txt"));
        return false;
    }
    const auto ds = dataset::load_dataset(dir / "dataset.bin");
    rep.check(ds.rows() == 60000 && ds.cols == 180, fmt("rows ", ds.rows(), " x ", ds.cols));
    const auto n_train = ds.indices(dataset::Split::train).size();
    const auto n_val = ds.indices(dataset::Split::val).size();
    const auto n_test = ds.indices(dataset::Split::test).size();
    rep.check(n_train == 33600 && n_val == 8400 && n_test == 18000,
              fmt("splits train/val/test ", n_train, "/", n_val, "/", n_test));

    // Rebuild the clean rows from the same seed to separate noise from signal.
    const dataset::DatasetConfig cfg = dataset::dataset_config_from_json(ds.meta.at("config"));
    std::vector<float> base = dataset::generate_pilot_scans(cfg.seed, cfg.n_pilot, cfg);
    for (auto [kind, count] : {std::pair{dataset::SceneKind::mixed, cfg.n_synth_mixed},
                               std::pair{dataset::SceneKind::dynamic_only, cfg.n_synth_dynamic},
                               std::pair{dataset::SceneKind::static_only, cfg.n_synth_static}}) {
        const auto part = dataset::generate_synthetic_scans(cfg.seed, kind, count, cfg);
        base.insert(base.end(), part.begin(), part.end());
    }
    const auto clean = dataset::augment_rotations(base, 180, cfg.rotation_copies, cfg.seed);
    rep.check(clean.size() == ds.samples.size(), "regenerated clean rows match the file size");
    if (clean.size() != ds.samples.size()) {
        return false;
    }

    std::size_t bad_perm = 0;
    const std::size_t group = static_cast<std::size_t>(cfg.rotation_copies) + 1;
    for (std::size_t g = 0; g < clean.size() / 180 / group; ++g) {
        const float* src = clean.data() + g * group * 180;
        for (std::size_t c = 1; c < group; ++c) {
            const float* cp = src + c * 180;
            bool found = false;
            for (std::size_t sh = 1; sh < 180 && !found; ++sh) {
                bool ok = true;
                for (std::size_t k = 0; k < 180 && ok; ++k) {
                    ok = cp[(k + sh) % 180] == src[k];
                }
                found = ok;
            }
            bad_perm += found ? 0 : 1;
        }
    }
    rep.check(bad_perm == 0, fmt("rotation copies that are not exact circular shifts: ", bad_perm));

    std::size_t changed_eval_rows = 0;
    double sum = 0.0, sum2 = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        for (std::size_t k = 0; k < 180; ++k) {
            const double c = clean[i * 180 + k];
            const double v = ds.samples[i * 180 + k];
            if (ds.split[i] != dataset::Split::train) {
                changed_eval_rows += v != c ? 1 : 0;
            } else if (c >= 0.35 && c <= 0.65) {
                // Far from the clip bounds, so the residual is the raw noise.
                sum += v - c;
                sum2 += (v - c) * (v - c);
                ++count;
            }
        }
    }
    rep.check(changed_eval_rows == 0, fmt("validation/test elements altered by noise: ", changed_eval_rows));
    const double target = std::sqrt(0.007);
    const double reported = ds.meta.at("noise").at("stddev_pre_clip").get<double>();
    rep.check(std::abs(reported - target) <= 0.02 * target,
              fmt("pre-clip noise std ", reported, " vs sqrt(0.007) = ", target));
    if (count > 1000) {
        const double m = sum / static_cast<double>(count);
        const double sd = std::sqrt(sum2 / static_cast<double>(count) - m * m);
        rep.check(std::abs(sd - target) <= 0.02 * target,
                  fmt("residual std on unclipped mid-range elements ", sd, " (", count, " elements)"));
    }
    fs::remove_all(dir);
    return rep.passed();
}

// ---------------------------------------------------------------- 6

bool beta_regularization(Report& rep) {
    const auto ds = desk_dataset(6);
    const auto test = ds.indices(dataset::Split::test);
    rep.note(fmt("desk dataset ", ds.rows(), " rows, ", test.size(), " test"));
    vae::VaeSpec spec;
    spec.latent_dim = 2;
    vae::VaeTrainConfig tc;
    tc.epochs = 20;

    std::vector<double> kls;
    for (double beta : {0.0, 1.0, 5.0, 50.0}) {
        auto res = vae::train_vae(ds, spec, beta, tc, 60);
        const auto terms = vae::evaluate_rows(res.model, ds, test, 1);
        const auto diag = vae::latent_diagnostics(res.model, ds, test);
        rep.note(fmt("beta ", beta, ": test bce ", terms.bce, ", kl ", terms.kl, ", active dims ", diag.active_dims));
        if (beta == 50.0) {
            rep.check(diag.active_dims == 0, fmt("beta 50 collapses: active dims ", diag.active_dims));
        } else {
            kls.push_back(terms.kl);
        }
    }
    rep.check(kls[0] >= kls[1] && kls[1] >= kls[2],
              fmt("test KL non-increasing over beta 0, 1, 5: ", kls[0], ", ", kls[1], ", ", kls[2]));
    return rep.passed();
}

// ---------------------------------------------------------------- 7

bool vae_seed_spread(Report& rep) {
    const auto ds = desk_dataset(7);
    vae::VaeTrainConfig tc;
    tc.epochs = 20;
    stats::Interval result[2];
    for (auto arch : {vae::Arch::shallow, vae::Arch::deep}) {
        vae::VaeSpec spec;
        spec.arch = arch;
        std::vector<vae::VaeModel> models;
        for (std::uint64_t s = 0; s < 5; ++s) {
            models.push_back(vae::train_vae(ds, spec, 1.0, tc, 700 + s).model);
        }
        const auto rep_arch = vae::evaluate_vae(models, ds);
        std::string losses;
        for (double l : rep_arch.losses) {
            losses += fmt(" ", l);
        }
        rep.note(fmt(vae::arch_name(arch), " test loss ", rep_arch.total.mean, " +- ", rep_arch.total.stddev,
                     " (seeds:", losses, ")"));
        result[arch == vae::Arch::shallow ? 0 : 1] = rep_arch.total;
    }
    rep.check(result[0].stddev < result[1].stddev,
              fmt("shallow std ", result[0].stddev, " < deep std ", result[1].stddev));
    rep.check(result[0].mean <= result[1].mean,
              fmt("shallow mean ", result[0].mean, " <= deep mean ", result[1].mean));
    return rep.passed();
}

// ---------------------------------------------------------------- 8

double brute_advantage(const std::vector<double>& r, const std::vector<double>& v, const std::vector<double>& d,
                       double last, double gamma, double lambda, std::size_t t) {
    // Sum of (gamma lambda)^k-weighted TD residuals up to the episode end.
    double acc = 0.0;
    double w = 1.0;
    for (std::size_t k = t; k < r.size(); ++k) {
        const double next = k + 1 < r.size() ? v[k + 1] : last;
        const bool end = d[k] != 0.0;
        acc += w * (r[k] + (end ? 0.0 : gamma * next) - v[k]);
        if (end) {
            break;
        }
        w *= gamma * lambda;
    }
    return acc;
}

bool gae_oracle(Report& rep) {
    Rng rng(808);
    double worst_adv = 0.0, worst_ret = 0.0;
    int cases = 0;
    for (double gamma : {0.0, 0.5, 0.9, 0.99, 0.999, 1.0}) {
        for (double lambda : {0.0, 0.5, 0.9, 0.98, 1.0}) {
            for (int rep_i = 0; rep_i < 20; ++rep_i) {
                const std::size_t n = 1 + static_cast<std::size_t>(rng.integer(0, 40));
                std::vector<double> r(n), v(n), d(n);
                for (std::size_t t = 0; t < n; ++t) {
                    r[t] = rng.uniform(-3, 3);
                    v[t] = rng.uniform(-3, 3);
                    d[t] = rng.uniform() < 0.15 ? 1.0 : 0.0;
                }
                const double last = rng.uniform(-3, 3);
                const auto g = agent::gae(r, v, d, last, gamma, lambda);
                for (std::size_t t = 0; t < n; ++t) {
                    const double a = brute_advantage(r, v, d, last, gamma, lambda, t);
                    worst_adv = std::max(worst_adv, std::abs(g.advantages[t] - a));
                    worst_ret = std::max(worst_ret, std::abs(g.returns[t] - (a + v[t])));
                }
                ++cases;
            }
        }
    }
    rep.check(worst_adv <= 1e-10, fmt("advantages: max deviation ", worst_adv, " over ", cases, " sequences"));
    rep.check(worst_ret <= 1e-10, fmt("returns: max deviation ", worst_ret));
    return rep.passed();
}

// ---------------------------------------------------------------- 9

bool reward_contract(Report& rep) {
    const agent::RewardConfig cfg = agent::EnvConfig{}.resolved().reward;
    dynamics::VesselState s;
    guidance::NavFeatures nav;
    rep.check(agent::reward(s, nav, true, cfg) == -1000.0, "collision gives -1000");
    s.nu[0] = cfg.u_max;
    const double perfect = agent::reward(s, nav, false, cfg);
    rep.check(std::abs(perfect - 1.0) <= 1e-12, fmt("perfect tracking at full speed gives ", perfect));

    Rng rng(909);
    double lo = 1e9, hi = -1e9;
    for (int i = 0; i < 1000000; ++i) {
        const double r = agent::path_reward(rng.uniform(-2 * cfg.u_max, 2 * cfg.u_max), rng.uniform(-2 * kPi, 2 * kPi),
                                            rng.uniform(-500, 500), cfg.u_max);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    rep.check(lo >= 0.0 && hi <= 2.0, fmt("path reward over 1e6 random inputs in [", lo, ", ", hi, "]"));
    return rep.passed();
}

// ---------------------------------------------------------------- 10 / 11

vae::VaeModel pretrained_shallow(Report& rep) {
    const auto ds = desk_dataset(10);
    vae::VaeTrainConfig tc;
    tc.epochs = 10;
    auto res = vae::train_vae(ds, {}, 1.0, tc, 10);
    rep.note(fmt("pretrained shallow VAE, best val loss ", res.curve[static_cast<std::size_t>(res.best_epoch - 1)].val.total));
    return res.model;
}

double tail_mean(const std::vector<agent::EpisodeRecord>& eps, std::size_t n,
                 const std::function<double(const agent::EpisodeRecord&)>& f) {
    const std::size_t k = std::min(n, eps.size());
    double acc = 0.0;
    for (std::size_t i = eps.size() - k; i < eps.size(); ++i) {
        acc += f(eps[i]);
    }
    return k == 0 ? 0.0 : acc / static_cast<double>(k);
}

agent::TrainAgentResult train_logged(agent::Agent a, const agent::PpoConfig& ppo, const agent::EnvConfig& env,
                                     std::uint64_t seed, const std::string& tag) {
    std::int64_t next = 100000;
    return agent::train_agent(std::move(a), ppo, env, seed, [&](std::int64_t t, const auto& eps) {
        if (t >= next) {
            next += 100000;
            std::cout << "  .. " << tag << " " << t << " steps, " << eps.size() << " episodes, last-100 progress "
                      << tail_mean(eps, 100, [](const auto& e) { return e.progress; }) << std::endl;
        }
    });
}

bool rl_sanity(Report& rep) {
    auto model = pretrained_shallow(rep);
    agent::PpoConfig ppo;
    ppo.total_timesteps = 500000;
    const auto env = agent::obstacle_free(agent::EnvConfig{});
    auto res = train_logged(agent::make_agent(agent::ExtractorMode::shallow_locked, &model, 11), ppo, env, 11,
                            "shallow_locked");
    const double prog = tail_mean(res.episodes, 100, [](const auto& e) { return e.progress; });
    rep.check(res.episodes.size() >= 100, fmt(res.episodes.size(), " episodes in ", res.timesteps, " steps"));
    rep.check(prog >= 0.9, fmt("mean progress of the last 100 episodes ", 100 * prog, "% (target >= 90%)"));
    rep.note(fmt("mean |cte| of the last 100 episodes ", tail_mean(res.episodes, 100, [](const auto& e) { return e.mean_cte; }),
                 " m, mean length ", tail_mean(res.episodes, 100, [](const auto& e) { return double(e.steps); }), " steps"));
    rep.check(res.encoder_hash_before == res.encoder_hash_after, "locked encoder unchanged");
    return rep.passed();
}

bool rl_scaled(Report& rep) {
    auto model = pretrained_shallow(rep);
    agent::EnvConfig env;
    env.scenario.n_static = 4;
    env.scenario.n_dynamic = 4;
    agent::PpoConfig ppo;
    ppo.total_timesteps = 1000000;
    const fs::path dir = scratch("rl_scaled");

    for (auto mode : {agent::ExtractorMode::shallow_locked, agent::ExtractorMode::baseline}) {
        const std::string name = agent::mode_name(mode);
        auto res = train_logged(agent::make_agent(mode, mode == agent::ExtractorMode::baseline ? nullptr : &model, 12),
                                ppo, env, 12, name);
        const auto& eps = res.episodes;
        const double prog = tail_mean(eps, 100, [](const auto& e) { return e.progress; });
        rep.check(prog >= 0.8, fmt(name, ": mean progress of the last 100 episodes ", 100 * prog, "% (target >= 80%)"));
        rep.note(fmt(name, ": mean |cte| of the last 100 episodes ",
                     tail_mean(eps, 100, [](const auto& e) { return e.mean_cte; }), " m"));

        const std::size_t q = eps.size() / 4;
        double first = 0.0, last = 0.0;
        for (std::size_t i = 0; i < q; ++i) {
            first += eps[i].collision ? 1.0 : 0.0;
            last += eps[eps.size() - q + i].collision ? 1.0 : 0.0;
        }
        first /= std::max<std::size_t>(q, 1);
        last /= std::max<std::size_t>(q, 1);
        rep.check(q > 0 && first > last, fmt(name, ": collision rate first quartile ", first, " > last quartile ", last,
                                             " (", eps.size(), " episodes)"));

        auto report = agent::evaluate_agent(res.agent, env, 100, 12);
        const fs::path csv = dir / (name + "_report.csv");
        agent::write_report_csv(report, csv);
        const std::string table = slurp(csv);
        const bool complete = table.find("progress_pct") != std::string::npos &&
                              table.find("cte_m") != std::string::npos &&
                              table.find("duration_steps") != std::string::npos &&
                              table.find("collision_rate_pct") != std::string::npos && report.progress.n == 100;
        rep.check(complete, fmt(name, ": evaluation report over ", report.progress.n, " scenarios"));
        std::istringstream lines(table);
        for (std::string line; std::getline(lines, line);) {
            rep.note(name + " | " + line);
        }
    }
    return rep.passed();
}

// ---------------------------------------------------------------- 12

/// Runs a subcommand, replays it from its manifest into a second directory
/// and compares every recorded output plus the manifest byte for byte.
bool replay(Report& rep, const std::string& name, const std::string& args, const fs::path& root) {
    const fs::path a = root / (name + "_a");
    const fs::path b = root / (name + "_b");
    const int rc_a = run_cli(args + " --out " + a.string(), root / (name + "_a.log"));
    if (rc_a != 0) {
        rep.check(false, fmt(name, ": first run failed (", rc_a, "): ", slurp(root / (name + "_a.log"))));
        return false;
    }
    const std::string sub = args.substr(0, args.find(' '));
    const int rc_b = run_cli(sub + " --config " + (a / "manifest.json").string() + " --out " + b.string(),
                             root / (name + "_b.log"));
    if (rc_b != 0) {
        rep.check(false, fmt(name, ": replay failed (", rc_b, "): ", slurp(root / (name + "_b.log"))));
        return false;
    }
    const auto manifest = io::read_json(a / "manifest.json");
    std::size_t files = 0, differ = 0;
    std::vector<std::string> names{"manifest.json"};
    for (const auto& [file, hash] : manifest.at("outputs").items()) {
        names.push_back(file);
    }
    for (const auto& f : names) {
        ++files;
        if (!fs::exists(b / f) || slurp(a / f) != slurp(b / f)) {
            ++differ;
            rep.note(fmt(name, ": ", f, " differs"));
        }
    }
    rep.check(differ == 0 && files > 1, fmt(name, ": ", files, " files, ", differ, " differ"));
    return differ == 0;
}

bool determinism(Report& rep) {
    const fs::path root = scratch("determinism");
    io::write_json(root / "data.json",
                   {{"seed", 5},
                    {"dataset", {{"n_pilot", 120}, {"n_synth_mixed", 60}, {"n_synth_dynamic", 30}, {"n_synth_static", 30}}}});
    io::write_json(root / "vae.json", {{"seed", 3}, {"train", {{"epochs", 2}}}});
    io::write_json(root / "agent.json", {{"seed", 4}, {"env", {{"scenario", {{"n_static", 2}, {"n_dynamic", 2}}}}}});

    bool ok = replay(rep, "gen-data", "gen-data --config " + (root / "data.json").string(), root);
    const std::string data = (root / "gen-data_a" / "dataset.bin").string();
    ok = ok && replay(rep, "train-vae",
                      "train-vae --config " + (root / "vae.json").string() + " --arch shallow --beta 1 --seeds 2 --data " + data,
                      root);
    const std::string ck0 = (root / "train-vae_a" / "vae_seed0.ckpt").string();
    const std::string ck1 = (root / "train-vae_a" / "vae_seed1.ckpt").string();
    ok = ok && replay(rep, "eval-vae", "eval-vae --ckpt " + ck0 + " --ckpt " + ck1 + " --data " + data, root);
    ok = ok && replay(rep, "train-agent",
                      "train-agent --config " + (root / "agent.json").string() +
                          " --mode shallow_locked --timesteps 3000 --vae " + ck0,
                      root);
    const std::string ag = (root / "train-agent_a" / "agent.ckpt").string();
    ok = ok && replay(rep, "eval-agent", "eval-agent --seed 9 --agent " + ag + " --episodes 3 --trajectories 1", root);
    ok = ok && replay(rep, "export-scans", "export --what scans --max-rows 50 --data " + data, root);
    ok = ok && replay(rep, "export-latents", "export --what latents --split val --ckpt " + ck0 + " --data " + data, root);
    ok = ok && replay(rep, "export-scenario", "export --what scenario --seed 2 --index 7", root);
    if (ok) {
        fs::remove_all(root);
    }
    return ok && rep.passed();
}

struct Criterion {
    const char* name;
    bool (*run)(Report&);
};

const Criterion kCriteria[] = {
    {"gradients", gradients},
    {"adjointness", adjointness},
    {"shapes", shapes},
    {"geometry", geometry},
    {"dataset", dataset_pipeline},
    {"beta_regularization", beta_regularization},
    {"vae_seed_spread", vae_seed_spread},
    {"gae", gae_oracle},
    {"reward", reward_contract},
    {"rl_sanity", rl_sanity},
    {"rl_scaled", rl_scaled},
    {"determinism", determinism},
};

bool run_one(const Criterion& c) {
    Report rep;
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    try {
        ok = c.run(rep);
    } catch (const std::exception& e) {
        rep.check(false, fmt("exception: ", e.what()));
    }
    ok = ok && rep.passed();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.print();
    std::cout << (ok ? "PASS " : "FAIL ") << c.name << " (" << fmt(secs) << " s)" << std::endl;
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string which = argc > 1 ? argv[1] : "all";
    bool ok = true;
    bool found = false;
    for (const auto& c : kCriteria) {
        if (which == "all" || which == c.name) {
            found = true;
            ok = run_one(c) && ok;
        }
    }
    if (!found) {
        std::cerr << "unknown check '" << which << "'; choose one of:";
        for (const auto& c : kCriteria) {
            std::cerr << ' ' << c.name;
        }
        std::cerr << " or all\n";
        return 2;
    }
    return ok ? 0 : 1;
}
