#include "mmreid/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "mmreid/losses_match.hpp"
#include "mmreid/losses_reid.hpp"
#include "mmreid/rng.hpp"

namespace mmreid::train {

namespace fs = std::filesystem;

// ------------------------------------------------------------ ModelBundle

ModelBundle ModelBundle::create(const TrainConfig& cfg) {
    cfg.validate();
    ModelBundle m;
    m.img_cfg.height = cfg.image_height;
    m.img_cfg.width = cfg.image_width;
    m.img_cfg.patch = cfg.patch;
    m.img_cfg.embed_dim = cfg.embed_dim;
    m.img_cfg.depth = cfg.depth;
    m.img_cfg.heads = cfg.heads;
    m.img_cfg.init_stddev = cfg.init_stddev;

    m.txt_cfg.vocab = enc::Vocab::build(data::caption_vocabulary());
    m.txt_cfg.max_len = cfg.text_max_len;
    m.txt_cfg.embed_dim = cfg.embed_dim;
    m.txt_cfg.depth = cfg.text_depth;
    m.txt_cfg.heads = cfg.text_heads;
    m.txt_cfg.init_stddev = cfg.init_stddev;

    m.dec_cfg.depth = cfg.decoder_depth;
    m.dec_cfg.embed_dim = cfg.embed_dim;
    m.dec_cfg.heads = cfg.decoder_heads;
    m.dec_cfg.patch = cfg.patch;
    m.dec_cfg.channels = 3;
    m.dec_cfg.init_stddev = cfg.init_stddev;

    m.online = std::make_unique<enc::ImageEncoder>(m.img_cfg, mix_key(cfg.seed, "init_image"));
    m.momentum = std::make_unique<enc::ImageEncoder>(m.img_cfg, m.online->params(), false);
    m.text = std::make_unique<enc::TextEncoder>(m.txt_cfg, mix_key(cfg.seed, "init_text"));
    m.decoder = std::make_unique<recon::Decoder>(m.dec_cfg, mix_key(cfg.seed, "init_decoder"));

    Rng head_rng = derive_rng(cfg.seed, "init_heads");
    m.w_img = enc::ProjectionHead::create(m.heads, "w_img", cfg.embed_dim, cfg.proj_dim, head_rng,
                                          cfg.init_stddev);
    m.w_txt = enc::ProjectionHead::create(m.heads, "w_txt", cfg.embed_dim, cfg.proj_dim, head_rng,
                                          cfg.init_stddev);
    return m;
}

std::vector<std::pair<std::string, Value>> ModelBundle::trainable_params() const {
    std::vector<std::pair<std::string, Value>> out;
    for (const auto& [n, v] : online->params().items()) out.emplace_back("online/" + n, v);
    for (const auto& [n, v] : text->params().items()) out.emplace_back("text/" + n, v);
    for (const auto& [n, v] : decoder->params().items()) out.emplace_back("decoder/" + n, v);
    for (const auto& [n, v] : heads.items()) out.emplace_back("heads/" + n, v);
    return out;
}

// ------------------------------------------------------------------ AdamW

AdamW::AdamW(std::vector<std::pair<std::string, Value>> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [n, v] : params_) {
        m_.emplace_back(static_cast<std::size_t>(v.size()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(v.size()), 0.0);
    }
}

void AdamW::step(double lr, double weight_decay) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Value& p = params_[i].second;
        auto& data = p.leaf_data();
        auto& m = m_[i];
        auto& v = v_[i];
        const bool has_grad = p.has_grad();
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double g = has_grad ? p.grad()[j] : 0.0;
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            data[j] = data[j] * (1.0 - weight_decay) - lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamW::restore(std::uint64_t t, const std::vector<std::vector<double>>& m,
                    const std::vector<std::vector<double>>& v) {
    if (m.size() != m_.size() || v.size() != v_.size()) {
        throw std::invalid_argument("AdamW::restore: state cardinality mismatch");
    }
    t_ = t;
    m_ = m;
    v_ = v;
}

// ---------------------------------------------------------------- Trainer

Trainer::Trainer(const TrainConfig& cfg, const data::Corpus* multi, const data::Corpus* single)
    : cfg_(cfg), multi_(multi), single_(single), model_(ModelBundle::create(cfg)) {
    cfg_.validate();
    if (cfg_.reid && (!multi_ || multi_->records.empty())) {
        throw std::invalid_argument("Trainer: reid task enabled but the multi-camera corpus is empty");
    }
    sampling::SamplerConfig scfg;
    scfg.p_m = cfg_.p_m;
    scfg.k_m = cfg_.k_m;
    scfg.p_s = cfg_.p_s;
    scfg.k_s = cfg_.k_s;
    scfg.seed = cfg_.seed;
    sampler_ = std::make_unique<sampling::BatchSampler>(multi_, single_, scfg);
    steps_per_epoch_ = multi_ ? std::max(1, static_cast<int>(multi_->records.size()) / scfg.multi_size())
                              : 1;
    opt_ = std::make_unique<AdamW>(model_.trainable_params());
}

bool Trainer::needs_single() const {
    return cfg_.itm || cfg_.ir || cfg_.single_reid != SingleReidPlacement::kNone;
}

double Trainer::lr_at(long long global_step) const {
    const long long warmup_steps = static_cast<long long>(cfg_.warmup_epochs) * steps_per_epoch_;
    if (warmup_steps <= 0 || global_step >= warmup_steps) return cfg_.lr;
    return cfg_.lr * static_cast<double>(global_step) / static_cast<double>(warmup_steps);
}

Value Trainer::encode_project_images(const std::vector<const data::SampleRecord*>& records,
                                     bool augmented, int epoch, int step,
                                     std::vector<Value>* cls_rows) const {
    std::vector<Value> rows;
    rows.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const data::SampleRecord* rec = records[i];
        Image img = rec->image;
        if (augmented) {
            img = data::augment(img, mix_key(cfg_.seed, "augment", static_cast<std::uint64_t>(epoch),
                                             static_cast<std::uint64_t>(step),
                                             static_cast<std::uint64_t>(i)));
        }
        rows.push_back(model_.online->encode(img).cls);
    }
    Value cls = concat_rows(rows);
    if (cls_rows) *cls_rows = rows;
    return cls;
}

StepReport Trainer::train_step(const sampling::ComposedBatch& batch) {
    StepReport report;
    report.step = global_step_;
    report.lr = lr_at(global_step_);

    for (auto& [n, v] : opt_->params()) v.zero_grad();

    std::vector<Value> components;

    // ---- Re-ID task on the multi-camera part
    if (cfg_.reid) {
        if (batch.multi.empty()) {
            throw std::invalid_argument("train_step: reid enabled but the batch has no multi part");
        }
        reid::ReIDBatch rb;
        rb.emb = model_.w_img.project(encode_project_images(batch.multi, false, batch.epoch, batch.step)).z;
        rb.emb_aug =
            model_.w_img.project(encode_project_images(batch.multi, true, batch.epoch, batch.step)).z;
        for (const auto* rec : batch.multi) {
            rb.labels.push_back(rec->identity);
            rb.cameras.push_back(rec->camera);
        }
        auto total = reid::reid_total(rb, cfg_.tau_reid);
        report.l_ins = total.ins.item();
        report.l_aug = total.aug.item();
        report.l_cen = total.cen.item();
        report.l_cc = total.cc.item();
        Value reid_value = total.total;

        // Optional placement of the Re-ID losses on single-camera data
        if (cfg_.single_reid != SingleReidPlacement::kNone && !batch.single.empty()) {
            reid::ReIDBatch sb;
            sb.emb =
                model_.w_img.project(encode_project_images(batch.single, false, batch.epoch, batch.step)).z;
            const bool need_aug = cfg_.single_reid == SingleReidPlacement::kAll ||
                                  cfg_.single_reid == SingleReidPlacement::kAugOnly;
            if (need_aug) {
                sb.emb_aug = model_.w_img
                                 .project(encode_project_images(batch.single, true, batch.epoch,
                                                                batch.step + 7919))
                                 .z;
            }
            for (const auto* rec : batch.single) {
                sb.labels.push_back(rec->identity);
                sb.cameras.push_back(rec->camera);
            }
            std::vector<Value> extra;
            if (cfg_.single_reid == SingleReidPlacement::kAll ||
                cfg_.single_reid == SingleReidPlacement::kInsOnly) {
                extra.push_back(reid::instance_loss(sb, cfg_.tau_reid));
            }
            if (need_aug) {
                extra.push_back(reid::augmentation_loss(sb, cfg_.tau_reid));
            }
            if (cfg_.single_reid == SingleReidPlacement::kAll ||
                cfg_.single_reid == SingleReidPlacement::kCenOnly) {
                auto cs = reid::compute_centroids(sb);
                extra.push_back(reid::centroids_loss(sb, cs, cfg_.tau_reid));
            }
            for (auto& e : extra) reid_value = add(reid_value, e);
        }
        report.l_reid = reid_value.item();
        components.push_back(reid_value);
    }

    // Shared text encodings for matching and reconstruction, cached per
    // distinct caption token sequence.
    std::map<std::vector<int>, enc::TextEncodeOutput> text_cache;
    std::vector<const enc::TextEncodeOutput*> text_outputs;
    if ((cfg_.itm || cfg_.ir) && !batch.single.empty()) {
        text_outputs.reserve(batch.single.size());
        for (const auto* rec : batch.single) {
            auto ids = model_.txt_cfg.vocab.encode(rec->caption);
            auto it = text_cache.find(ids);
            if (it == text_cache.end()) {
                it = text_cache.emplace(ids, model_.text->encode(ids)).first;
            }
            text_outputs.push_back(&it->second);
        }
    }

    // ---- Image-text matching on the single-camera part
    if (cfg_.itm && !batch.single.empty()) {
        match::MatchBatch mb;
        auto img_proj =
            model_.w_img.project(encode_project_images(batch.single, false, batch.epoch, batch.step));
        mb.z_img = img_proj.z;
        mb.zhat_img = img_proj.zhat;
        std::vector<Value> txt_rows;
        txt_rows.reserve(batch.single.size());
        for (const auto* t : text_outputs) txt_rows.push_back(t->cls);
        auto txt_proj = model_.w_txt.project(concat_rows(txt_rows));
        mb.z_txt = txt_proj.z;
        mb.zhat_txt = txt_proj.zhat;
        for (const auto* rec : batch.single) mb.labels.push_back(rec->identity);

        Value match_value = Value::scalar(0.0);
        switch (cfg_.match_variant) {
            case MatchVariant::kClip:
                match_value = match::clip_loss(mb, cfg_.clip_temperature);
                report.l_im = match_value.item();
                break;
            case MatchVariant::kSoftClip:
                match_value = match::soft_clip_loss(mb, cfg_.clip_temperature, cfg_.alpha);
                report.l_im = match_value.item();
                break;
            case MatchVariant::kIm:
                match_value =
                    match::identity_aware_matching_loss(mb, cfg_.alpha, cfg_.kl_eps, cfg_.normalize_query);
                report.l_im = match_value.item();
                break;
            case MatchVariant::kImSp: {
                Value im =
                    match::identity_aware_matching_loss(mb, cfg_.alpha, cfg_.kl_eps, cfg_.normalize_query);
                Value sp = match::structure_preserving_loss(mb, cfg_.tau_sp, cfg_.sp_include_positive);
                report.l_im = im.item();
                report.l_sp = sp.item();
                match_value = add(im, sp);
                break;
            }
        }
        report.l_match = match_value.item();
        components.push_back(match_value);
    }

    // ---- Text-guided masked reconstruction on the single-camera part
    if (cfg_.ir && !batch.single.empty()) {
        std::vector<Value> mses;
        std::vector<Value> coses;
        for (std::size_t i = 0; i < batch.single.size(); ++i) {
            const auto* rec = batch.single[i];
            Value patches = Value::constant(model_.img_cfg.patch_count(), model_.img_cfg.patch_dim(),
                                            patchify(rec->image, model_.img_cfg.patch));
            auto plan = recon::make_mask(model_.img_cfg.patch_count(), cfg_.mask_ratio,
                                         mix_key(cfg_.seed, "mask", static_cast<std::uint64_t>(batch.epoch),
                                                 static_cast<std::uint64_t>(batch.step),
                                                 static_cast<std::uint64_t>(i)));
            auto sample = recon::reconstruct_sample(patches, *model_.online, *model_.momentum,
                                                    *text_outputs[i], *model_.decoder, plan);
            mses.push_back(sample.mse);
            if (!sample.cos_skipped) coses.push_back(sample.cos);
        }
        Value mse = scale(sum_all(concat_rows(mses)), 1.0 / static_cast<double>(mses.size()));
        Value cos = coses.empty()
                        ? Value::scalar(0.0)
                        : scale(sum_all(concat_rows(coses)), 1.0 / static_cast<double>(coses.size()));
        Value rec_value = recon::reconstruction_loss(mse, cos);
        report.l_mse = mse.item();
        report.l_cos = cos.item();
        report.l_rec = rec_value.item();
        components.push_back(rec_value);
    }

    Value total = Value::scalar(0.0);
    for (const auto& c : components) total = add(total, c);
    report.total = total.item();

    if (!std::isfinite(report.total)) {
        throw std::runtime_error("train_step: non-finite total loss at step " +
                                 std::to_string(global_step_) + " (reid=" + std::to_string(report.l_reid) +
                                 " match=" + std::to_string(report.l_match) +
                                 " rec=" + std::to_string(report.l_rec) + ")");
    }

    if (!components.empty()) {
        total.backward();
        opt_->step(report.lr, cfg_.weight_decay);
        enc::ema_update(model_.online->params(), model_.momentum->params(), cfg_.ema_m);
    }

    ++global_step_;
    return report;
}

RunResult Trainer::run() {
    fs::create_directories(cfg_.out_dir);
    RunResult result;
    result.loss_log_path = (fs::path(cfg_.out_dir) / "loss_log.csv").string();
    const bool fresh = global_step_ == 0;
    std::ofstream log(result.loss_log_path, fresh ? std::ios::trunc : std::ios::app);
    if (fresh) log << "step,lr,L_reid,L_im,L_sp,L_mse,L_cos,total\n";

    for (; epoch_ < cfg_.epochs; ++epoch_) {
        const int start_step = static_cast<int>(global_step_ % steps_per_epoch_);
        for (int step = start_step; step < steps_per_epoch_; ++step) {
            auto batch = sampler_->compose(epoch_, step, global_step_, needs_single());
            auto report = train_step(batch);
            log << report.step << ',' << report.lr << ',' << report.l_reid << ',' << report.l_im << ','
                << report.l_sp << ',' << report.l_mse << ',' << report.l_cos << ',' << report.total
                << '\n';
            result.reports.push_back(report);
        }
        log.flush();
        if (cfg_.checkpoint_every > 0 && (epoch_ + 1) % cfg_.checkpoint_every == 0 &&
            epoch_ + 1 < cfg_.epochs) {
            save((fs::path(cfg_.out_dir) / ("checkpoint_epoch" + std::to_string(epoch_ + 1) + ".ckpt"))
                     .string());
        }
    }
    log.flush();

    if (!cfg_.dump_reconstructions.empty() && cfg_.ir && single_ && !single_->records.empty()) {
        fs::create_directories(cfg_.dump_reconstructions);
        const int count = std::min<int>(4, static_cast<int>(single_->records.size()));
        for (int i = 0; i < count; ++i) {
            const auto& rec = single_->records[static_cast<std::size_t>(i)];
            Value patches = Value::constant(model_.img_cfg.patch_count(), model_.img_cfg.patch_dim(),
                                            patchify(rec.image, model_.img_cfg.patch));
            auto plan = recon::make_mask(model_.img_cfg.patch_count(), cfg_.mask_ratio,
                                         mix_key(cfg_.seed, "dump", static_cast<std::uint64_t>(i)));
            auto text = model_.text->encode(rec.caption);
            auto sample =
                recon::reconstruct_sample(patches, *model_.online, *model_.momentum, text, *model_.decoder, plan);
            Value assembled = recon::assemble_patches(patches, sample.predicted, plan);
            std::vector<double> px = assembled.data();
            for (auto& v : px) v = std::clamp(v, 0.0, 1.0);
            Image reconstructed = unpatchify(px, model_.img_cfg.height, model_.img_cfg.width,
                                             model_.img_cfg.patch);
            const std::string stem =
                (fs::path(cfg_.dump_reconstructions) / ("sample" + std::to_string(i))).string();
            data::write_ppm(rec.image, stem + "_original.ppm");
            data::write_ppm(recon::masked_preview(rec.image, plan, model_.img_cfg.patch),
                            stem + "_masked.ppm");
            data::write_ppm(reconstructed, stem + "_reconstructed.ppm");
        }
    }

    result.checkpoint_path = (fs::path(cfg_.out_dir) / "checkpoint_final.ckpt").string();
    save(result.checkpoint_path);
    return result;
}

void Trainer::save(const std::string& path) const {
    CheckpointData ckpt;
    ckpt.config_text = config_to_text(cfg_);
    ckpt.epoch = static_cast<std::uint32_t>(epoch_);
    ckpt.global_step = static_cast<std::uint64_t>(global_step_);
    ckpt.adam_t = opt_->t();

    auto dump_store = [&](const std::string& group, const nn::ParamStore& store) {
        for (const auto& [n, v] : store.items()) {
            CheckpointData::Array arr;
            arr.rows = static_cast<std::uint32_t>(v.rows());
            arr.cols = static_cast<std::uint32_t>(v.cols());
            arr.data = v.data();
            ckpt.groups[group][n] = std::move(arr);
        }
    };
    dump_store("online", model_.online->params());
    dump_store("momentum", model_.momentum->params());
    dump_store("text", model_.text->params());
    dump_store("decoder", model_.decoder->params());
    dump_store("heads", model_.heads);

    const auto& params = opt_->params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        ckpt.adam_m[params[i].first] = opt_->moment1(i);
        ckpt.adam_v[params[i].first] = opt_->moment2(i);
    }
    save_checkpoint(ckpt, path);
}

void Trainer::load_state(const CheckpointData& ckpt) {
    auto restore_store = [&](const std::string& group, nn::ParamStore& store) {
        const auto git = ckpt.groups.find(group);
        if (git == ckpt.groups.end()) {
            throw std::runtime_error("checkpoint: missing parameter group '" + group + "'");
        }
        for (auto& [n, v] : store.items()) {
            const auto pit = git->second.find(n);
            if (pit == git->second.end()) {
                throw std::runtime_error("checkpoint: missing parameter '" + group + "/" + n + "'");
            }
            if (static_cast<int>(pit->second.rows) != v.rows() ||
                static_cast<int>(pit->second.cols) != v.cols()) {
                throw std::runtime_error("checkpoint: shape mismatch for '" + group + "/" + n + "'");
            }
            v.leaf_data() = pit->second.data;
        }
    };
    restore_store("online", model_.online->params());
    restore_store("momentum", model_.momentum->params());
    restore_store("text", model_.text->params());
    restore_store("decoder", model_.decoder->params());
    restore_store("heads", model_.heads);

    const auto& params = opt_->params();
    std::vector<std::vector<double>> m, v;
    for (const auto& [name, value] : params) {
        const auto mit = ckpt.adam_m.find(name);
        const auto vit = ckpt.adam_v.find(name);
        if (mit == ckpt.adam_m.end() || vit == ckpt.adam_v.end()) {
            throw std::runtime_error("checkpoint: missing optimizer state for '" + name + "'");
        }
        m.push_back(mit->second);
        v.push_back(vit->second);
    }
    opt_->restore(ckpt.adam_t, m, v);
    global_step_ = static_cast<long long>(ckpt.global_step);
    // checkpoints are written at epoch boundaries; derive the next epoch
    epoch_ = static_cast<int>(global_step_ / steps_per_epoch_);
}

ModelBundle load_model_from_checkpoint(const std::string& path, TrainConfig* config_out) {
    CheckpointData ckpt = load_checkpoint(path);
    TrainConfig cfg = parse_config_text(ckpt.config_text);
    if (config_out) *config_out = cfg;
    ModelBundle model = ModelBundle::create(cfg);
    auto restore_store = [&](const std::string& group, nn::ParamStore& store) {
        const auto git = ckpt.groups.find(group);
        if (git == ckpt.groups.end()) {
            throw std::runtime_error("checkpoint: missing parameter group '" + group + "'");
        }
        for (auto& [n, v] : store.items()) {
            const auto pit = git->second.find(n);
            if (pit == git->second.end()) {
                throw std::runtime_error("checkpoint: missing parameter '" + group + "/" + n + "'");
            }
            v.leaf_data() = pit->second.data;
        }
    };
    restore_store("online", model.online->params());
    restore_store("momentum", model.momentum->params());
    restore_store("text", model.text->params());
    restore_store("decoder", model.decoder->params());
    restore_store("heads", model.heads);
    return model;
}

std::unique_ptr<Trainer> Trainer::resume(const std::string& checkpoint_path, const data::Corpus* multi,
                                         const data::Corpus* single) {
    CheckpointData ckpt = load_checkpoint(checkpoint_path);
    TrainConfig cfg = parse_config_text(ckpt.config_text);
    auto trainer = std::make_unique<Trainer>(cfg, multi, single);
    trainer->load_state(ckpt);
    return trainer;
}

}  // namespace mmreid::train
