#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mmreid::suite {

struct LossCheckResult {
    std::string name;
    bool pass = false;
    double max_rel_err = 0.0;
    int seeds = 0;
};

struct LossSuiteOptions {
    int seeds = 5;       // micro-batches per loss
    double step = 1e-5;
    double tolerance = 1e-4;
    std::string scope;   // "", "match", "reid", "rec", "total"
    bool inject_sign_flip = false;  // test fixture: corrupts every backward
};

// Central-finite-difference checks for the twelve losses: L_ins, L_aug,
// L_cen, L_cc, CLIP, SoftCLIP, L_im, L_sp, L_mse, L_cos, L_rec and the joint
// training total, each on seeded micro-batches. Temperatures are probed at
// well-conditioned values; the backward rules under test are
// temperature-independent.
std::vector<LossCheckResult> run_loss_gradient_suite(const LossSuiteOptions& options);

bool all_pass(const std::vector<LossCheckResult>& results);

}  // namespace mmreid::suite
