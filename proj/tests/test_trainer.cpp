#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mmreid/trainer.hpp"

using namespace mmreid;
using namespace mmreid::train;
namespace fs = std::filesystem;

namespace {

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.lr = 1e-3;
    cfg.warmup_epochs = 1;
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
    cfg.init_stddev = 0.05;
    cfg.p_m = 4;
    cfg.k_m = 2;
    cfg.p_s = 8;
    cfg.k_s = 2;
    cfg.seed = 3;
    cfg.out_dir = (fs::temp_directory_path() / "mmreid_trainer_test").string();
    return cfg;
}

struct Corpora {
    data::Corpus multi;
    data::Corpus single;
};

Corpora tiny_corpora() {
    data::CorpusSpec mspec;
    mspec.n_ids = 8;
    mspec.cameras = 3;
    mspec.images_per_id_per_cam = 2;
    mspec.height = 16;
    mspec.width = 8;
    mspec.seed = 41;
    data::CorpusSpec sspec;
    sspec.n_ids = 16;
    sspec.cameras = 1;
    sspec.images_per_id_per_cam = 2;
    sspec.height = 16;
    sspec.width = 8;
    sspec.seed = 42;
    sspec.with_captions = true;
    sspec.domain_style = "single";
    return {data::generate_corpus(mspec), data::generate_corpus(sspec)};
}

}  // namespace

TEST_CASE("lr warm-up schedule") {
    auto corpora = tiny_corpora();
    TrainConfig cfg = tiny_config();
    cfg.warmup_epochs = 1;
    Trainer trainer(cfg, &corpora.multi, &corpora.single);
    const int spe = trainer.steps_per_epoch();
    REQUIRE(spe == 6);  // 48 multi images / 8 per batch
    CHECK(trainer.lr_at(0) == 0.0);
    CHECK(trainer.lr_at(spe / 2) == doctest::Approx(cfg.lr / 2).epsilon(1e-12));
    CHECK(trainer.lr_at(spe) == cfg.lr);
    CHECK(trainer.lr_at(spe * 10) == cfg.lr);
}

TEST_CASE("all toggles off is a no-op step") {
    auto corpora = tiny_corpora();
    TrainConfig cfg = tiny_config();
    cfg.reid = cfg.itm = cfg.ir = false;
    Trainer trainer(cfg, &corpora.multi, &corpora.single);
    std::vector<std::vector<double>> before;
    for (const auto& [n, v] : trainer.model().trainable_params()) before.push_back(v.data());

    auto batch = sampling::BatchSampler(&corpora.multi, &corpora.single,
                                        {cfg.p_m, cfg.k_m, cfg.p_s, cfg.k_s, cfg.seed, true})
                     .compose(0, 0, 0, false);
    auto report = trainer.train_step(batch);
    CHECK(report.total == 0.0);
    std::size_t i = 0;
    for (const auto& [n, v] : trainer.model().trainable_params()) {
        CHECK(bitwise_equal(v.data(), before[i++]));
    }
}

TEST_CASE("with itm and ir off the total equals the reid loss bitwise") {
    auto corpora = tiny_corpora();
    TrainConfig cfg = tiny_config();
    cfg.itm = false;
    cfg.ir = false;
    Trainer trainer(cfg, &corpora.multi, &corpora.single);
    auto batch = sampling::BatchSampler(&corpora.multi, &corpora.single,
                                        {cfg.p_m, cfg.k_m, cfg.p_s, cfg.k_s, cfg.seed, true})
                     .compose(0, 0, 0, false);
    auto report = trainer.train_step(batch);
    CHECK(report.total == report.l_reid);
    CHECK(report.l_im == 0.0);
    CHECK(report.l_rec == 0.0);
}

TEST_CASE("identical seeds give identical per-step loss traces") {
    auto corpora = tiny_corpora();
    TrainConfig cfg = tiny_config();
    Trainer a(cfg, &corpora.multi, &corpora.single);
    Trainer b(cfg, &corpora.multi, &corpora.single);
    sampling::BatchSampler sampler(&corpora.multi, &corpora.single,
                                   {cfg.p_m, cfg.k_m, cfg.p_s, cfg.k_s, cfg.seed, true});
    for (int step = 0; step < 3; ++step) {
        auto batch = sampler.compose(0, step, step, true);
        auto ra = a.train_step(batch);
        auto rb = b.train_step(batch);
        CHECK(ra.total == rb.total);
        CHECK(ra.l_reid == rb.l_reid);
        CHECK(ra.l_match == rb.l_match);
        CHECK(ra.l_rec == rb.l_rec);
    }
}

TEST_CASE("total equals the sum of component losses") {
    auto corpora = tiny_corpora();
    TrainConfig cfg = tiny_config();
    Trainer trainer(cfg, &corpora.multi, &corpora.single);
    sampling::BatchSampler sampler(&corpora.multi, &corpora.single,
                                   {cfg.p_m, cfg.k_m, cfg.p_s, cfg.k_s, cfg.seed, true});
    auto report = trainer.train_step(sampler.compose(0, 0, 0, true));
    CHECK(std::abs(report.total - (report.l_reid + report.l_match + report.l_rec)) < 1e-10);
    CHECK(std::abs(report.l_match - (report.l_im + report.l_sp)) < 1e-12);
    CHECK(std::abs(report.l_rec - (report.l_mse + report.l_cos)) < 1e-12);
}

TEST_CASE("gradient-flow partition between the tasks") {
    auto corpora = tiny_corpora();
    sampling::SamplerConfig scfg{4, 2, 8, 2, 3, true};

    SUBCASE("itm only: decoder receives no gradient") {
        TrainConfig cfg = tiny_config();
        cfg.reid = false;
        cfg.ir = false;
        Trainer trainer(cfg, &corpora.multi, &corpora.single);
        sampling::BatchSampler sampler(&corpora.multi, &corpora.single, scfg);
        trainer.train_step(sampler.compose(0, 0, 0, true));
        for (const auto& [n, v] : trainer.model().decoder->params().items()) {
            if (!v.has_grad()) continue;
            for (double g : v.grad()) CHECK(g == 0.0);
        }
    }
    SUBCASE("ir only: text projection head receives no gradient") {
        TrainConfig cfg = tiny_config();
        cfg.reid = false;
        cfg.itm = false;
        Trainer trainer(cfg, &corpora.multi, &corpora.single);
        sampling::BatchSampler sampler(&corpora.multi, &corpora.single, scfg);
        trainer.train_step(sampler.compose(0, 0, 0, true));
        const Value w_txt = trainer.model().heads.get("w_txt.w");
        if (w_txt.has_grad()) {
            for (double g : w_txt.grad()) CHECK(g == 0.0);
        }
        // while the decoder trained
        bool any = false;
        for (const auto& [n, v] : trainer.model().decoder->params().items()) {
            if (!v.has_grad()) continue;
            for (double g : v.grad()) {
                if (g != 0.0) any = true;
            }
        }
        CHECK(any);
    }
    SUBCASE("momentum encoder never accumulates gradient") {
        TrainConfig cfg = tiny_config();
        Trainer trainer(cfg, &corpora.multi, &corpora.single);
        sampling::BatchSampler sampler(&corpora.multi, &corpora.single, scfg);
        trainer.train_step(sampler.compose(0, 0, 0, true));
        for (const auto& [n, v] : trainer.model().momentum->params().items()) {
            CHECK_FALSE(v.has_grad());
            CHECK_FALSE(v.requires_grad());
        }
    }
}

TEST_CASE("optimizer honours the lr/decay contract") {
    Value p = Value::param(1, 4, {1.0, -2.0, 0.5, 4.0});
    p.zero_grad();
    {
        Value loss = sum_all(mul(p, p));
        loss.backward();
    }
    SUBCASE("lr 0 changes weights only through decay") {
        AdamW opt({{"p", p}});
        auto before = p.data();
        opt.step(0.0, 0.02);
        for (std::size_t i = 0; i < before.size(); ++i) {
            CHECK(p.data()[i] == before[i] * (1.0 - 0.02));
        }
    }
    SUBCASE("lr 0 and decay 0 change nothing") {
        AdamW opt({{"p", p}});
        auto before = p.data();
        opt.step(0.0, 0.0);
        CHECK(bitwise_equal(p.data(), before));
    }
}

TEST_CASE("run produces logs, checkpoints and a warm-up ramp") {
    auto corpora = tiny_corpora();
    TrainConfig cfg = tiny_config();
    cfg.out_dir = (fs::temp_directory_path() / "mmreid_run_test").string();
    fs::remove_all(cfg.out_dir);
    Trainer trainer(cfg, &corpora.multi, &corpora.single);
    auto result = trainer.run();

    CHECK(fs::exists(result.checkpoint_path));
    std::ifstream log(result.loss_log_path);
    REQUIRE(log.good());
    std::string header;
    std::getline(log, header);
    CHECK(header == "step,lr,L_reid,L_im,L_sp,L_mse,L_cos,total");

    double prev_lr = -1.0;
    bool nondecreasing = true;
    for (const auto& r : result.reports) {
        if (r.lr < prev_lr) nondecreasing = false;
        prev_lr = r.lr;
    }
    CHECK(nondecreasing);
    CHECK(result.reports.size() == static_cast<std::size_t>(2 * trainer.steps_per_epoch()));
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("checkpoint resume reproduces the loss trajectory") {
    auto corpora = tiny_corpora();
    TrainConfig cfg = tiny_config();
    cfg.out_dir = (fs::temp_directory_path() / "mmreid_resume_test").string();
    fs::remove_all(cfg.out_dir);
    fs::create_directories(cfg.out_dir);

    sampling::BatchSampler sampler(&corpora.multi, &corpora.single,
                                   {cfg.p_m, cfg.k_m, cfg.p_s, cfg.k_s, cfg.seed, true});
    Trainer a(cfg, &corpora.multi, &corpora.single);
    const int spe = a.steps_per_epoch();

    // epoch 0 in full
    for (int step = 0; step < spe; ++step) a.train_step(sampler.compose(0, step, step, true));
    const std::string ckpt = cfg.out_dir + "/mid.ckpt";
    a.save(ckpt);

    std::vector<double> expected;
    for (int step = 0; step < 10; ++step) {
        const long long g = spe + step;
        expected.push_back(a.train_step(sampler.compose(1, step % spe, g, true)).total);
    }

    auto b = Trainer::resume(ckpt, &corpora.multi, &corpora.single);
    CHECK(b->global_step() == spe);
    CHECK(b->epoch() == 1);
    for (int step = 0; step < 10; ++step) {
        const long long g = spe + step;
        const double got = b->train_step(sampler.compose(1, step % spe, g, true)).total;
        CHECK(std::abs(got - expected[static_cast<std::size_t>(step)]) < 1e-12);
    }
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("checkpoint echoes the full config") {
    auto corpora = tiny_corpora();
    TrainConfig cfg = tiny_config();
    cfg.out_dir = (fs::temp_directory_path() / "mmreid_echo_test").string();
    cfg.itm = false;
    fs::remove_all(cfg.out_dir);
    fs::create_directories(cfg.out_dir);
    Trainer trainer(cfg, &corpora.multi, &corpora.single);
    trainer.save(cfg.out_dir + "/c.ckpt");
    auto ckpt = load_checkpoint(cfg.out_dir + "/c.ckpt");
    CHECK(ckpt.config_text == config_to_text(cfg));
    TrainConfig parsed = parse_config_text(ckpt.config_text);
    CHECK(parsed.itm == false);
    CHECK(parsed.alpha == cfg.alpha);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("non-finite losses abort with component attribution") {
    auto corpora = tiny_corpora();
    TrainConfig cfg = tiny_config();
    Trainer trainer(cfg, &corpora.multi, &corpora.single);
    auto& w = trainer.model().decoder->params().get("pixel_head.w").leaf_data();
    for (auto& v : w) v = 1e200;  // squared pixel error overflows to inf
    sampling::BatchSampler sampler(&corpora.multi, &corpora.single,
                                   {cfg.p_m, cfg.k_m, cfg.p_s, cfg.k_s, cfg.seed, true});
    try {
        trainer.train_step(sampler.compose(0, 0, 0, true));
        FAIL("expected abort");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("reid=") != std::string::npos);
    }
}

TEST_CASE("config file round trip and overrides") {
    TrainConfig cfg;
    cfg.alpha = 0.7;
    cfg.match_variant = MatchVariant::kSoftClip;
    const std::string text = config_to_text(cfg);
    TrainConfig parsed = parse_config_text(text);
    CHECK(parsed.alpha == 0.7);
    CHECK(parsed.match_variant == MatchVariant::kSoftClip);
    CHECK(config_digest(parsed) == config_digest(cfg));

    apply_override(parsed, "tasks.itm=off");
    CHECK_FALSE(parsed.itm);
    CHECK(config_digest(parsed) != config_digest(cfg));
    CHECK_THROWS_AS(apply_override(parsed, "tasks.bogus=1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("[train]\nepochs = twelve\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("[train]\nnope = 1\n"), std::invalid_argument);
}
