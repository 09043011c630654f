#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mmreid/checkpoint.hpp"
#include "mmreid/config.hpp"
#include "mmreid/datakit.hpp"
#include "mmreid/encoders.hpp"
#include "mmreid/reconstruction.hpp"
#include "mmreid/sampling.hpp"

namespace mmreid::train {

// Online image encoder, its frozen EMA twin, text encoder, decoder and the
// two projection heads, all built from one TrainConfig.
struct ModelBundle {
    enc::ImageEncoderConfig img_cfg;
    enc::TextEncoderConfig txt_cfg;
    recon::DecoderConfig dec_cfg;
    std::unique_ptr<enc::ImageEncoder> online;
    std::unique_ptr<enc::ImageEncoder> momentum;
    std::unique_ptr<enc::TextEncoder> text;
    std::unique_ptr<recon::Decoder> decoder;
    nn::ParamStore heads;
    enc::ProjectionHead w_img, w_txt;

    static ModelBundle create(const TrainConfig& cfg);
    // Ordered optimizer view: online encoder, text encoder, decoder, heads.
    // The momentum twin is deliberately absent.
    std::vector<std::pair<std::string, Value>> trainable_params() const;
};

// Decoupled-decay Adam: theta <- theta * (1 - wd) - lr * mhat / (sqrt(vhat) + eps).
// The decay applies multiplicatively to the weights independent of lr.
class AdamW {
public:
    AdamW(std::vector<std::pair<std::string, Value>> params, double beta1 = 0.9,
          double beta2 = 0.999, double eps = 1e-8);

    void step(double lr, double weight_decay);
    std::uint64_t t() const { return t_; }

    // checkpoint plumbing
    const std::vector<std::pair<std::string, Value>>& params() const { return params_; }
    const std::vector<double>& moment1(std::size_t i) const { return m_[i]; }
    const std::vector<double>& moment2(std::size_t i) const { return v_[i]; }
    void restore(std::uint64_t t, const std::vector<std::vector<double>>& m,
                 const std::vector<std::vector<double>>& v);

private:
    std::vector<std::pair<std::string, Value>> params_;
    std::vector<std::vector<double>> m_, v_;
    double beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
};

struct StepReport {
    long long step = 0;
    double lr = 0.0;
    double l_reid = 0.0, l_ins = 0.0, l_aug = 0.0, l_cen = 0.0, l_cc = 0.0;
    double l_im = 0.0, l_sp = 0.0, l_match = 0.0;
    double l_mse = 0.0, l_cos = 0.0, l_rec = 0.0;
    double total = 0.0;
};

struct RunResult {
    std::string checkpoint_path;
    std::string loss_log_path;
    std::vector<StepReport> reports;
};

// Parameters only, no optimizer state: enough for inference/evaluation.
ModelBundle load_model_from_checkpoint(const std::string& path, TrainConfig* config_out = nullptr);

class Trainer {
public:
    Trainer(const TrainConfig& cfg, const data::Corpus* multi, const data::Corpus* single);

    double lr_at(long long global_step) const;
    int steps_per_epoch() const { return steps_per_epoch_; }
    bool needs_single() const;

    StepReport train_step(const sampling::ComposedBatch& batch);
    RunResult run();

    void save(const std::string& path) const;
    // Rebuilds a trainer from a checkpoint; corpora are re-attached by the
    // caller (data files are not embedded in checkpoints).
    static std::unique_ptr<Trainer> resume(const std::string& checkpoint_path,
                                           const data::Corpus* multi, const data::Corpus* single);

    const TrainConfig& config() const { return cfg_; }
    const ModelBundle& model() const { return model_; }
    ModelBundle& model() { return model_; }
    long long global_step() const { return global_step_; }
    int epoch() const { return epoch_; }

private:
    void load_state(const CheckpointData& ckpt);
    Value encode_project_images(const std::vector<const data::SampleRecord*>& records,
                                bool augmented, int epoch, int step,
                                std::vector<Value>* cls_rows = nullptr) const;

    TrainConfig cfg_;
    const data::Corpus* multi_;
    const data::Corpus* single_;
    ModelBundle model_;
    std::unique_ptr<AdamW> opt_;
    std::unique_ptr<sampling::BatchSampler> sampler_;
    int steps_per_epoch_ = 0;
    long long global_step_ = 0;
    int epoch_ = 0;
};

}  // namespace mmreid::train
