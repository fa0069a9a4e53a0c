#pragma once

#include <string>

#include "crys/gradcheck.hpp"
#include "crys/pretrain.hpp"

namespace crys {

/// Union of every tunable the subcommands accept. Each subcommand binds the
/// subset it uses; flat key=value config files use exactly these key names,
/// and explicit flags override file values.
struct TrainConfig {
    EncoderConfig encoder;
    PretrainWeights weights;
    AdamHyper adam;
    double delta = 0.5;
    int epochs = 200;
    int batch_size = 128;
    std::uint64_t seed = 0;
    int count = 64;
    double noise_sigma = 0.05;
    double tolerance = 1e-4;
    double fd_epsilon = 1e-5;
    std::string data;
    std::string train;
    std::string val;
    std::string test;
    std::string teacher;
    std::string checkpoint;
    std::string out;
};

/// Finite-difference verification of the two training objectives on a small
/// random batch of 3-6-node graphs: the four-way pretraining loss with every
/// component enabled, and the distillation loss at delta 0.5 through a
/// dimension-changing projection.
struct ObjectiveGradCheck {
    GradCheckReport pretrain;
    GradCheckReport distill;
    bool pass = false;
};
ObjectiveGradCheck run_objective_gradcheck(std::uint64_t seed, double fd_epsilon,
                                           double tolerance);

/// Subcommands: gen-synthetic, pretrain, distill, eval, gradcheck.
/// Exit codes: 0 success, 2 usage, 3 config, 4 data, 5 numerical. Every
/// failure prints one stderr line starting with error[<code>]:.
int run_cli(int argc, const char* const* argv);

}  // namespace crys
