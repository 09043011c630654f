#include "mmreid/loss_suite.hpp"

#include <functional>

#include "mmreid/gradcheck.hpp"
#include "mmreid/losses_match.hpp"
#include "mmreid/losses_reid.hpp"
#include "mmreid/reconstruction.hpp"
#include "mmreid/rng.hpp"
#include "mmreid/trainer.hpp"

namespace mmreid::suite {

namespace {

Value random_param(int r, int c, Rng& rng, double stddev = 1.0) {
    std::vector<double> d(static_cast<std::size_t>(r) * c);
    for (auto& v : d) v = rng.normal(0.0, stddev);
    return Value::param(r, c, std::move(d));
}

// identity op whose backward flips the gradient sign (negative control)
Value sign_flip(const Value& x) {
    return Value::from_op(x.rows(), x.cols(), x.data(), {x}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (int i = 0; i < self.size(); ++i) p.grad[i] -= self.grad[i];
    }, "sign_flip");
}

struct ReidFixture {
    reid::ReIDBatch batch;

    explicit ReidFixture(std::uint64_t seed) {
        Rng rng(seed);
        batch.emb = random_param(6, 6, rng);
        batch.emb_aug = random_param(6, 6, rng);
        batch.labels = {0, 0, 1, 1, 2, 2};
        batch.cameras = {0, 1, 0, 1, 0, 1};
    }
};

struct MatchFixture {
    Value z_img_raw, z_txt_raw;
    std::vector<int> labels;

    explicit MatchFixture(std::uint64_t seed) {
        Rng rng(seed ^ 0x5a5a5a5aULL);
        z_img_raw = random_param(6, 6, rng);
        z_txt_raw = random_param(6, 6, rng);
        labels = {0, 0, 1, 1, 2, 2};
    }

    match::MatchBatch build() const {
        match::MatchBatch b;
        b.z_img = z_img_raw;
        b.zhat_img = l2_normalize_rows(z_img_raw);
        b.z_txt = z_txt_raw;
        b.zhat_txt = l2_normalize_rows(z_txt_raw);
        b.labels = labels;
        return b;
    }
};

// Tiny end-to-end models for the reconstruction and total-loss checks.
struct PipelineFixture {
    train::TrainConfig cfg;
    data::Corpus multi, single;
    std::unique_ptr<train::Trainer> trainer;
    sampling::ComposedBatch batch;

    explicit PipelineFixture(std::uint64_t seed) {
        cfg.image_height = 16;
        cfg.image_width = 8;
        cfg.patch = 4;
        cfg.embed_dim = 16;
        cfg.depth = 1;
        cfg.heads = 2;
        cfg.proj_dim = 8;
        cfg.text_depth = 1;
        cfg.text_heads = 2;
        cfg.decoder_depth = 2;
        cfg.decoder_heads = 2;
        cfg.init_stddev = 0.15;
        cfg.p_m = 2;
        cfg.k_m = 2;
        cfg.p_s = 2;
        cfg.k_s = 2;
        cfg.tau_reid = 0.5;
        cfg.tau_sp = 0.5;
        cfg.clip_temperature = 0.5;
        cfg.warmup_epochs = 0;
        cfg.epochs = 1;
        cfg.seed = seed;

        data::CorpusSpec mspec;
        mspec.n_ids = 4;
        mspec.cameras = 2;
        mspec.images_per_id_per_cam = 2;
        mspec.height = 16;
        mspec.width = 8;
        mspec.seed = seed * 3 + 1;
        multi = data::generate_corpus(mspec);

        data::CorpusSpec sspec;
        sspec.n_ids = 4;
        sspec.cameras = 1;
        sspec.images_per_id_per_cam = 2;
        sspec.height = 16;
        sspec.width = 8;
        sspec.seed = seed * 5 + 2;
        sspec.with_captions = true;
        single = data::generate_corpus(sspec);

        trainer = std::make_unique<train::Trainer>(cfg, &multi, &single);
        sampling::SamplerConfig scfg{cfg.p_m, cfg.k_m, cfg.p_s, cfg.k_s, cfg.seed, true};
        batch = sampling::BatchSampler(&multi, &single, scfg).compose(0, 0, 0, true);
    }

    // parameters spread across every component
    std::vector<std::pair<std::string, Value>> probe_params(bool with_decoder, bool with_text,
                                                            bool with_heads) const {
        std::vector<std::pair<std::string, Value>> p;
        auto& m = trainer->model();
        p.emplace_back("online/patch_embed.w", m.online->params().get("patch_embed.w"));
        p.emplace_back("online/mask_token", m.online->params().get("mask_token"));
        p.emplace_back("online/block0.attn.q.w", m.online->params().get("block0.attn.q.w"));
        if (with_text) {
            p.emplace_back("text/tok_emb", m.text->params().get("tok_emb"));
            p.emplace_back("text/block0.ff.fc1.w", m.text->params().get("block0.ff.fc1.w"));
        }
        if (with_decoder) {
            p.emplace_back("decoder/pixel_head.w", m.decoder->params().get("pixel_head.w"));
            p.emplace_back("decoder/dec0.cross.k.w", m.decoder->params().get("dec0.cross.k.w"));
        }
        if (with_heads) {
            p.emplace_back("heads/w_img.w", m.heads.get("w_img.w"));
            p.emplace_back("heads/w_txt.w", m.heads.get("w_txt.w"));
        }
        return p;
    }
};

struct Check {
    std::string name;
    std::string scope;
    std::function<double(std::uint64_t, const LossSuiteOptions&)> max_rel_err;
};

double run_check(const std::function<Value()>& objective,
                 const std::vector<std::pair<std::string, Value>>& params,
                 const LossSuiteOptions& opt, std::uint64_t seed) {
    auto wrapped = opt.inject_sign_flip
                       ? std::function<Value()>([&objective] { return sign_flip(objective()); })
                       : objective;
    return check_gradients(wrapped, params, opt.step, opt.tolerance, 32, seed).max_rel_err;
}

}  // namespace

std::vector<LossCheckResult> run_loss_gradient_suite(const LossSuiteOptions& opt) {
    const double tau_reid = 0.5;
    const double tau_sp = 0.5;
    const double clip_t = 0.5;
    const double alpha = 0.6;

    std::vector<Check> checks;

    auto reid_check = [&](const std::string& name,
                          std::function<Value(const reid::ReIDBatch&)> loss) {
        checks.push_back({name, "reid", [loss](std::uint64_t seed, const LossSuiteOptions& o) {
            ReidFixture f(seed);
            return run_check([&] { return loss(f.batch); },
                             {{"emb", f.batch.emb}, {"emb_aug", f.batch.emb_aug}}, o, seed);
        }});
    };
    reid_check("L_ins", [=](const reid::ReIDBatch& b) { return reid::instance_loss(b, tau_reid); });
    reid_check("L_aug", [=](const reid::ReIDBatch& b) { return reid::augmentation_loss(b, tau_reid); });
    reid_check("L_cen", [=](const reid::ReIDBatch& b) {
        return reid::centroids_loss(b, reid::compute_centroids(b), tau_reid);
    });
    reid_check("L_cc", [=](const reid::ReIDBatch& b) {
        return reid::camera_centroids_loss(b, reid::compute_centroids(b), tau_reid);
    });

    auto match_check = [&](const std::string& name,
                           std::function<Value(const match::MatchBatch&)> loss) {
        checks.push_back({name, "match", [loss](std::uint64_t seed, const LossSuiteOptions& o) {
            MatchFixture f(seed);
            return run_check([&] { return loss(f.build()); },
                             {{"z_img", f.z_img_raw}, {"z_txt", f.z_txt_raw}}, o, seed);
        }});
    };
    match_check("CLIP", [=](const match::MatchBatch& b) { return match::clip_loss(b, clip_t); });
    match_check("SoftCLIP",
                [=](const match::MatchBatch& b) { return match::soft_clip_loss(b, clip_t, alpha); });
    match_check("L_im", [=](const match::MatchBatch& b) {
        return match::identity_aware_matching_loss(b, alpha, 1e-8);
    });
    match_check("L_sp", [=](const match::MatchBatch& b) {
        return match::structure_preserving_loss(b, tau_sp, false);
    });

    auto rec_objective = [](PipelineFixture& f, int which) {  // 0=mse, 1=cos, 2=rec
        auto& m = f.trainer->model();
        std::vector<Value> terms;
        for (std::size_t i = 0; i < 2; ++i) {
            const auto* rec = f.batch.single[i];
            Value patches = Value::constant(m.img_cfg.patch_count(), m.img_cfg.patch_dim(),
                                            patchify(rec->image, m.img_cfg.patch));
            auto plan = recon::make_mask(m.img_cfg.patch_count(), 0.5, f.cfg.seed * 17 + i);
            auto text = m.text->encode(rec->caption);
            auto sample = recon::reconstruct_sample(patches, *m.online, *m.momentum, text, *m.decoder, plan);
            if (which == 0) terms.push_back(sample.mse);
            else if (which == 1) terms.push_back(sample.cos);
            else terms.push_back(recon::reconstruction_loss(sample.mse, sample.cos));
        }
        return scale(add(terms[0], terms[1]), 0.5);
    };
    checks.push_back({"L_mse", "rec", [rec_objective](std::uint64_t seed, const LossSuiteOptions& o) {
        PipelineFixture f(seed);
        return run_check([&] { return rec_objective(f, 0); }, f.probe_params(true, true, false), o, seed);
    }});
    checks.push_back({"L_cos", "rec", [rec_objective](std::uint64_t seed, const LossSuiteOptions& o) {
        PipelineFixture f(seed);
        return run_check([&] { return rec_objective(f, 1); }, f.probe_params(true, true, false), o, seed);
    }});
    checks.push_back({"L_rec", "rec", [rec_objective](std::uint64_t seed, const LossSuiteOptions& o) {
        PipelineFixture f(seed);
        return run_check([&] { return rec_objective(f, 2); }, f.probe_params(true, true, false), o, seed);
    }});

    checks.push_back({"total", "total", [](std::uint64_t seed, const LossSuiteOptions& o) {
        PipelineFixture f(seed);
        auto& m = f.trainer->model();
        auto objective = [&]() -> Value {
            // the full three-task objective on the micro batch
            reid::ReIDBatch rb;
            std::vector<Value> rows, rows_aug;
            for (std::size_t i = 0; i < f.batch.multi.size(); ++i) {
                const auto* rec = f.batch.multi[i];
                rows.push_back(m.online->encode(rec->image).cls);
                rows_aug.push_back(
                    m.online->encode(data::augment(rec->image, f.cfg.seed * 31 + i)).cls);
                rb.labels.push_back(rec->identity);
                rb.cameras.push_back(rec->camera);
            }
            rb.emb = m.w_img.project(concat_rows(rows)).z;
            rb.emb_aug = m.w_img.project(concat_rows(rows_aug)).z;
            Value total = reid::reid_total(rb, f.cfg.tau_reid).total;

            match::MatchBatch mb;
            std::vector<Value> img_rows, txt_rows;
            std::vector<enc::TextEncodeOutput> texts;
            for (const auto* rec : f.batch.single) {
                img_rows.push_back(m.online->encode(rec->image).cls);
                texts.push_back(m.text->encode(rec->caption));
                txt_rows.push_back(texts.back().cls);
                mb.labels.push_back(rec->identity);
            }
            auto ip = m.w_img.project(concat_rows(img_rows));
            auto tp = m.w_txt.project(concat_rows(txt_rows));
            mb.z_img = ip.z;
            mb.zhat_img = ip.zhat;
            mb.z_txt = tp.z;
            mb.zhat_txt = tp.zhat;
            total = add(total, match::identity_aware_matching_loss(mb, 0.6, 1e-8));
            total = add(total, match::structure_preserving_loss(mb, f.cfg.tau_sp, false));

            std::vector<Value> recs;
            for (std::size_t i = 0; i < f.batch.single.size(); ++i) {
                const auto* rec = f.batch.single[i];
                Value patches = Value::constant(m.img_cfg.patch_count(), m.img_cfg.patch_dim(),
                                                patchify(rec->image, m.img_cfg.patch));
                auto plan = recon::make_mask(m.img_cfg.patch_count(), 0.5, f.cfg.seed * 13 + i);
                auto sample =
                    recon::reconstruct_sample(patches, *m.online, *m.momentum, texts[i], *m.decoder, plan);
                recs.push_back(recon::reconstruction_loss(sample.mse, sample.cos));
            }
            Value rec_mean = scale(sum_all(concat_rows(recs)), 1.0 / static_cast<double>(recs.size()));
            return add(total, rec_mean);
        };
        return run_check(objective, f.probe_params(true, true, true), o, seed);
    }});

    std::vector<LossCheckResult> results;
    for (const auto& check : checks) {
        if (!opt.scope.empty() && check.scope != opt.scope && check.name != opt.scope) continue;
        LossCheckResult r;
        r.name = check.name;
        r.seeds = opt.seeds;
        for (int s = 0; s < opt.seeds; ++s) {
            r.max_rel_err = std::max(r.max_rel_err,
                                     check.max_rel_err(static_cast<std::uint64_t>(100 + s), opt));
        }
        r.pass = r.max_rel_err < opt.tolerance;
        results.push_back(std::move(r));
    }
    return results;
}

bool all_pass(const std::vector<LossCheckResult>& results) {
    for (const auto& r : results) {
        if (!r.pass) return false;
    }
    return !results.empty();
}

}  // namespace mmreid::suite
