#include "mmreid/cli_app.hpp"

#include <cstdio>
#include <filesystem>
#include <memory>

#include <CLI11.hpp>

#include "mmreid/ablation.hpp"
#include "mmreid/datakit.hpp"
#include "mmreid/evaluator.hpp"
#include "mmreid/kernels.hpp"
#include "mmreid/loss_suite.hpp"
#include "mmreid/trainer.hpp"

namespace mmreid::cli {

namespace fs = std::filesystem;

namespace {

struct CliContext {
    int threads = 0;

    std::string gen_out;
    int gen_ids = 16, gen_cameras = 1, gen_images = 2, gen_height = 64, gen_width = 32;
    std::uint64_t gen_seed = 0;
    std::string gen_domain = "source";
    bool gen_captions = false;

    std::string train_config;
    std::vector<std::string> train_sets;
    std::string train_resume;

    std::string eval_checkpoint, eval_target;
    std::string eval_ledger = "results.csv";
    std::uint64_t eval_seed = 0;

    std::string ab_grid, ab_config;
    std::vector<std::string> ab_sets;
    int ab_jobs = 1, ab_epochs = 0;
    std::string ab_ledger = "results.csv";
    std::string ab_chart = "ablation.svg";
    std::uint64_t ab_eval_seed = 0;

    std::string gc_scope;
    int gc_seeds = 5;
    double gc_step = 1e-5, gc_tol = 1e-4;
    bool gc_inject = false;
};

std::unique_ptr<CLI::App> build_app(CliContext& ctx) {
    auto app = std::make_unique<CLI::App>("synthetic person re-id training toolkit");
    app->require_subcommand(0, 1);
    app->add_option("--threads", ctx.threads, "kernel thread count (0 = all cores)")
        ->capture_default_str();

    auto* gen = app->add_subcommand("generate", "generate a synthetic corpus with a manifest");
    gen->add_option("--out", ctx.gen_out, "output directory")->required();
    gen->add_option("--ids", ctx.gen_ids, "number of identities")->capture_default_str();
    gen->add_option("--cameras", ctx.gen_cameras, "camera count (1 = single-camera corpus)")
        ->capture_default_str();
    gen->add_option("--images-per-id", ctx.gen_images, "images per identity per camera")
        ->capture_default_str();
    gen->add_option("--height", ctx.gen_height, "image height in pixels")->capture_default_str();
    gen->add_option("--width", ctx.gen_width, "image width in pixels")->capture_default_str();
    gen->add_option("--seed", ctx.gen_seed, "generation seed")->capture_default_str();
    gen->add_option("--domain", ctx.gen_domain, "domain style tag")->capture_default_str();
    gen->add_flag("--captions", ctx.gen_captions, "attach grammar captions to every record");

    auto* train = app->add_subcommand("train", "train from a config file");
    train->add_option("--config", ctx.train_config, "config file (key = value with sections)");
    train->add_option("--set", ctx.train_sets, "override, e.g. --set tasks.itm=off")
        ->take_all();
    train->add_option("--resume", ctx.train_resume, "checkpoint to resume from");

    auto* eval = app->add_subcommand("eval", "evaluate a checkpoint on a target-domain manifest");
    eval->add_option("--checkpoint", ctx.eval_checkpoint, "checkpoint file")->required();
    eval->add_option("--target", ctx.eval_target, "target manifest")->required();
    eval->add_option("--ledger", ctx.eval_ledger, "results ledger CSV to append to")
        ->capture_default_str();
    eval->add_option("--seed", ctx.eval_seed, "query/gallery split seed")->capture_default_str();

    auto* ablate = app->add_subcommand("ablate", "run a named configuration grid");
    ablate->add_option("--grid", ctx.ab_grid, "grid name: table2|table3|table4|table5|ks|ns|alpha|tau")
        ->required();
    ablate->add_option("--config", ctx.ab_config, "base config file");
    ablate->add_option("--set", ctx.ab_sets, "base config override")->take_all();
    ablate->add_option("--jobs", ctx.ab_jobs, "parallel grid workers")->capture_default_str();
    ablate->add_option("--epochs", ctx.ab_epochs, "epoch budget override for every cell (0 = keep)")
        ->capture_default_str();
    ablate->add_option("--ledger", ctx.ab_ledger, "results ledger CSV")->capture_default_str();
    ablate->add_option("--chart", ctx.ab_chart, "grouped bar chart SVG path")->capture_default_str();
    ablate->add_option("--eval-seed", ctx.ab_eval_seed, "evaluation split seed")->capture_default_str();

    auto* gradcheck = app->add_subcommand("gradcheck", "finite-difference checks over all losses");
    gradcheck->add_option("--scope", ctx.gc_scope, "restrict to: match|reid|rec|total or a loss name")
        ->capture_default_str();
    gradcheck->add_option("--seeds", ctx.gc_seeds, "micro-batches per loss")->capture_default_str();
    gradcheck->add_option("--step", ctx.gc_step, "finite-difference step")->capture_default_str();
    gradcheck->add_option("--tol", ctx.gc_tol, "max relative error to pass")->capture_default_str();
    gradcheck
        ->add_flag("--inject-sign-flip", ctx.gc_inject,
                   "negative control: corrupt every backward rule (must fail)")
        ->group("");  // hidden from help, reachable for the fixture

    return app;
}

train::TrainConfig load_base_config(const std::string& path, const std::vector<std::string>& sets) {
    train::TrainConfig cfg;
    if (!path.empty()) cfg = train::parse_config_file(path);
    for (const auto& s : sets) train::apply_override(cfg, s);
    cfg.validate();
    return cfg;
}

struct LoadedCorpora {
    std::unique_ptr<data::Corpus> multi, single, target;
};

LoadedCorpora load_corpora(const train::TrainConfig& cfg, bool need_target) {
    LoadedCorpora out;
    const bool need_single = cfg.itm || cfg.ir || cfg.single_reid != train::SingleReidPlacement::kNone;
    if (cfg.reid) {
        if (cfg.multi_manifest.empty()) {
            throw std::invalid_argument("config: data.multi_manifest is required when reid is on");
        }
        out.multi = std::make_unique<data::Corpus>(data::load_manifest(cfg.multi_manifest, false));
    }
    if (need_single) {
        if (cfg.single_manifest.empty()) {
            throw std::invalid_argument(
                "config: data.single_manifest is required for itm/ir/single-reid");
        }
        out.single = std::make_unique<data::Corpus>(
            data::load_manifest(cfg.single_manifest, cfg.itm || cfg.ir));
    }
    if (need_target) {
        if (cfg.target_manifest.empty()) {
            throw std::invalid_argument("config: data.target_manifest is required");
        }
        out.target = std::make_unique<data::Corpus>(data::load_manifest(cfg.target_manifest, false));
    }
    return out;
}

int cmd_generate(const CliContext& ctx) {
    data::CorpusSpec spec;
    spec.n_ids = ctx.gen_ids;
    spec.cameras = ctx.gen_cameras;
    spec.images_per_id_per_cam = ctx.gen_images;
    spec.height = ctx.gen_height;
    spec.width = ctx.gen_width;
    spec.seed = ctx.gen_seed;
    spec.domain_style = ctx.gen_domain;
    spec.with_captions = ctx.gen_captions;
    auto corpus = data::generate_corpus(spec);
    data::write_corpus(corpus, ctx.gen_out);
    std::printf("wrote %zu records (%d identities) to %s/manifest.jsonl\n", corpus.records.size(),
                ctx.gen_ids, ctx.gen_out.c_str());
    return 0;
}

int cmd_train(const CliContext& ctx) {
    if (!ctx.train_resume.empty()) {
        train::CheckpointData ckpt = train::load_checkpoint(ctx.train_resume);
        train::TrainConfig cfg = train::parse_config_text(ckpt.config_text);
        auto corpora = load_corpora(cfg, false);
        auto trainer = train::Trainer::resume(ctx.train_resume, corpora.multi.get(),
                                              corpora.single.get());
        auto result = trainer->run();
        std::printf("resumed run complete; checkpoint: %s\n", result.checkpoint_path.c_str());
        return 0;
    }
    train::TrainConfig cfg = load_base_config(ctx.train_config, ctx.train_sets);
    auto corpora = load_corpora(cfg, false);
    train::Trainer trainer(cfg, corpora.multi.get(), corpora.single.get());
    auto result = trainer.run();
    if (!result.reports.empty()) {
        const auto& last = result.reports.back();
        std::printf("final step %lld: total=%.6f reid=%.6f match=%.6f rec=%.6f\n", last.step,
                    last.total, last.l_reid, last.l_match, last.l_rec);
    }
    std::printf("checkpoint: %s\nloss log: %s\n", result.checkpoint_path.c_str(),
                result.loss_log_path.c_str());
    return 0;
}

int cmd_eval(const CliContext& ctx) {
    train::TrainConfig cfg;
    auto model = train::load_model_from_checkpoint(ctx.eval_checkpoint, &cfg);
    auto target = data::load_manifest(ctx.eval_target, false);
    auto metrics = eval::cross_domain_eval(model, target, ctx.eval_seed);
    const std::string domain = target.records.empty() ? "target" : target.records[0].domain;
    eval::append_results_ledger(ctx.eval_ledger, train::config_digest(cfg), domain, metrics);
    std::printf("domain=%s rank1=%.4f rank5=%.4f map=%.4f (evaluated %d, skipped %d)\n",
                domain.c_str(), metrics.rank1, metrics.rank5, metrics.map, metrics.evaluated_queries,
                metrics.skipped_queries);
    return 0;
}

int cmd_ablate(const CliContext& ctx) {
    train::TrainConfig base = load_base_config(ctx.ab_config, ctx.ab_sets);
    auto corpora = load_corpora(base, true);
    if (!corpora.multi || !corpora.single) {
        throw std::invalid_argument("ablate: both multi and single manifests are required");
    }
    AblationOptions options;
    options.jobs = ctx.ab_jobs;
    options.epochs_override = ctx.ab_epochs;
    options.ledger_path = ctx.ab_ledger;
    options.chart_path = ctx.ab_chart;
    options.eval_seed = ctx.ab_eval_seed;
    auto results = run_ablation(ctx.ab_grid, base, *corpora.multi, *corpora.single, *corpora.target,
                                options);
    bool all_ok = true;
    for (const auto& r : results) {
        if (!r.ok) all_ok = false;
    }
    std::printf("grid %s: %zu cells, ledger %s, chart %s\n", ctx.ab_grid.c_str(), results.size(),
                options.ledger_path.c_str(), options.chart_path.c_str());
    return all_ok ? 0 : 1;
}

int cmd_gradcheck(const CliContext& ctx) {
    suite::LossSuiteOptions options;
    options.scope = ctx.gc_scope;
    options.seeds = ctx.gc_seeds;
    options.step = ctx.gc_step;
    options.tolerance = ctx.gc_tol;
    options.inject_sign_flip = ctx.gc_inject;
    auto results = suite::run_loss_gradient_suite(options);
    if (results.empty()) {
        std::fprintf(stderr, "gradcheck: no losses match scope '%s'\n", ctx.gc_scope.c_str());
        return 2;
    }
    for (const auto& r : results) {
        std::printf("[%s] %-9s max rel err %.3e over %d seeds\n", r.pass ? "PASS" : "FAIL",
                    r.name.c_str(), r.max_rel_err, r.seeds);
    }
    return suite::all_pass(results) ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CliContext ctx;
    auto app = build_app(ctx);
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app->parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app->exit(e) == 0 ? 0 : 2;  // usage/validation
    }

    if (ctx.threads > 0) kernels::set_thread_count(ctx.threads);
    try {
        if (app->got_subcommand("generate")) return cmd_generate(ctx);
        if (app->got_subcommand("train")) return cmd_train(ctx);
        if (app->got_subcommand("eval")) return cmd_eval(ctx);
        if (app->got_subcommand("ablate")) return cmd_ablate(ctx);
        if (app->got_subcommand("gradcheck")) return cmd_gradcheck(ctx);
        std::fprintf(stderr, "%s", app->help().c_str());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

std::vector<FlagInfo> describe_cli() {
    CliContext ctx;
    auto app = build_app(ctx);
    std::vector<FlagInfo> out;
    auto collect = [&](const CLI::App* cmd, const std::string& name) {
        for (const auto* opt : cmd->get_options()) {
            if (opt->get_name() == "--help") continue;
            out.push_back({name, opt->get_name(), opt->get_description(), opt->get_default_str()});
        }
    };
    collect(app.get(), "");
    for (const auto* sub : app->get_subcommands({})) collect(sub, sub->get_name());
    return out;
}

}  // namespace mmreid::cli
