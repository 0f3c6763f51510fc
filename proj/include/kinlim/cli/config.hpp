#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kinlim/solvers.hpp"

namespace kinlim::cli {

enum class ExperimentKind {
    run,
    penrose_scan,
    landau,
    two_stream_timing,
    weibel,
    conv_vm_vp,
    conv_vm_vd,
    hierarchy_check,
    scaling_check
};

// Name as written in configs; conv_vm_vd carries its order ("conv_vm_vd2").
std::string kind_name(ExperimentKind k, int darwin_order);

struct PenroseScanSpec {
    double gamma_min = 1e-3;
    double gamma_max = 2.0;
    int n_gamma = 21;
    double tau_max = 10.0;
    int n_tau = 81;
    int k_max = 8;
    double eps = 0.0;
};

// Longitudinal field mode E_1 = amplitude cos(kappa_k x + phase), given only
// to be checked against Gauss's law.
struct E1Mode {
    int k = 1;
    double amplitude = 0.0;
    double phase = 0.0;
};

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::run;
    // Order N of conv_vm_vd{N}.
    int vd_order = 1;
    RunConfig base;
    std::vector<double> eps_values;
    std::vector<double> dt_values;
    std::vector<int> resolutions;  // nx values
    unsigned seed = 0;
    // Extra random-phase density modes drawn from `seed`.
    int random_modes = 0;
    double random_amplitude = 0.0;
    std::vector<E1Mode> e1;
    PenroseScanSpec penrose;
    // two_stream_timing: delta ||E||_2 crossing level; delta = eps^2 when delta_eps2.
    double threshold = 0.1;
    bool delta_eps2 = false;
    // Fit window for growth or damping rates.
    double fit_t0 = 0.0;
    double fit_t1 = 0.0;
    // scaling_check: scaling factors applied to the native snapshots.
    std::vector<double> lambdas = {0.5, 2.0};
    // Sobolev order of the model-comparison norm (0 is L^2).
    int error_hn = 0;
    std::filesystem::path out_dir;

    // Kind-level checks; base.validate() covers the run itself.
    void validate() const;
};

struct ConfigError : Error {
    ConfigError(const std::string& msg, int line_, std::string key_)
        : Error(msg), line(line_), key(std::move(key_)) {}
    int line = 0;
    std::string key;
};

// Strict parser for sectioned `key = value` text. Unknown sections or keys,
// repeated scalar keys, malformed values and inconsistent data are errors
// that name the line and key.
ExperimentSpec parse_config_text(std::string_view text, const std::string& origin = "<config>");
ExperimentSpec parse_config(const std::filesystem::path& path);

// Every parameter with defaults filled in, as parseable config text. Parsing
// the result reproduces the experiment; its SHA-256 is the config hash.
std::string canonical_config(const ExperimentSpec& spec);
// Ordered (section.key, value) pairs of canonical_config.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentSpec& spec);

// Perturbation with the random modes of the experiment appended.
Perturbation resolved_perturbation(const ExperimentSpec& spec);

}  // namespace kinlim::cli
