// capgen: command-line front end.
//
//   gen-data  synthetic two-domain dataset -> DIR/{source,target}_{train,val}.jsonl, vocab.txt, manifest.json
//   train     fit a model on DIR and write a checkpoint
//   adapt     fine-tune a checkpoint on the zero/one/few-shot target subset
//   generate  beam-search captions for a JSONL split
//   score     caption metrics of hypotheses against references
//   calib     calibration metrics of dumped token predictions
//   report    stacked per-frame captions plus the merged score report

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "capgen/checkpoint.hpp"
#include "capgen/decoding.hpp"
#include "capgen/kernels.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace capgen;

namespace {

const char* const kSplitFiles[] = {"source_train.jsonl", "source_val.jsonl", "target_train.jsonl",
                                   "target_val.jsonl"};

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return json::parse(in);
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

struct DataDir {
    DatasetSplits splits;
    Vocab vocab;
};

DataDir load_data_dir(const fs::path& dir) {
    DataDir d;
    d.vocab = Vocab::load(dir / "vocab.txt");
    std::vector<Sample>* targets[] = {&d.splits.source_train, &d.splits.source_val, &d.splits.target_train,
                                      &d.splits.target_val};
    for (int i = 0; i < 4; ++i) *targets[i] = load_jsonl(dir / kSplitFiles[i]);
    if (d.splits.source_train.empty()) throw std::runtime_error(dir.string() + ": source_train is empty");
    return d;
}

// Flags shared by train and adapt.
struct TrainFlags {
    TrainConfig train = TrainConfig::desk();
    ModelConfig model;
    std::string mode = "adversarial";
    bool no_grl = false, no_ls = false;
    std::string log_path;

    void add(CLI::App* app, bool with_model) {
        app->add_option("--epochs", train.epochs, "training epochs")->capture_default_str();
        app->add_option("--batch-size", train.batch_size, "frames per step")->capture_default_str();
        app->add_option("--warmup", train.warmup, "warmup steps of the lr schedule")->capture_default_str();
        app->add_option("--max-steps", train.max_steps, "stop after this many steps (0: all epochs)")
            ->capture_default_str();
        app->add_option("--lr-factor", train.lr_factor, "lr schedule multiplier")->capture_default_str();
        app->add_option("--beta1", train.adam_beta1)->capture_default_str();
        app->add_option("--beta2", train.adam_beta2)->capture_default_str();
        app->add_option("--adam-eps", train.adam_eps)->capture_default_str();
        app->add_option("--seed", train.seed)->capture_default_str();
        app->add_option("--ls-eps", train.label_smoothing, "label smoothing epsilon")->capture_default_str();
        app->add_option("--grl-lambda", train.grl_lambda)->capture_default_str();
        app->add_option("--domain-classes", train.n_domain_classes, "2 or 3")->capture_default_str();
        app->add_flag("--no-grl", no_grl, "drop the domain losses");
        app->add_flag("--no-ls", no_ls, "train with plain cross-entropy");
        app->add_option("--mode", mode, "source_only | adversarial")->capture_default_str();
        app->add_option("--finetune-steps", train.finetune_steps)->capture_default_str();
        app->add_flag("--finetune-domain-loss", train.finetune_domain_loss,
                      "keep the domain losses on while fine-tuning");
        app->add_option("--log", log_path, "JSON-lines step log");
        // --config lives on the top-level app (CLI11 only reads config files there);
        // fall through so it can still be given after the subcommand name.
        app->fallthrough();
        if (!with_model) return;
        app->add_option("--d-model", model.d_model)->capture_default_str();
        app->add_option("--heads", model.n_heads)->capture_default_str();
        app->add_option("--layers", model.n_layers)->capture_default_str();
        app->add_option("--memory-slots", model.n_memory_slots)->capture_default_str();
        app->add_option("--ff-width", model.ff_width)->capture_default_str();
        app->add_option("--max-len", model.max_caption_len, "longest caption incl. bos/eos")->capture_default_str();
        app->add_option("--dropout", model.dropout)->capture_default_str();
    }

    TrainConfig resolve() {
        train.mode = parse_train_mode(mode);
        train.use_grl = !no_grl;
        train.use_ls = !no_ls;
        train.validate();
        return train;
    }
};

std::unique_ptr<std::ofstream> open_log(const std::string& path) {
    if (path.empty()) return nullptr;
    return std::make_unique<std::ofstream>(open_out(path));
}

int cmd_gen_data(const fs::path& out, bool paper, std::uint64_t seed, double shift, double tightness) {
    SynthConfig cfg = paper ? SynthConfig::paper_scale() : SynthConfig::desk();
    cfg.seed = seed;
    if (!std::isnan(shift)) cfg.shift = shift;
    if (!std::isnan(tightness)) cfg.tightness = tightness;
    const SyntheticData data = generate_synthetic(cfg);
    const Vocab vocab = Vocab::build(all_captions(data));
    fs::create_directories(out);
    const std::vector<Sample>* splits[] = {&data.source_train, &data.source_val, &data.target_train,
                                           &data.target_val};
    for (int i = 0; i < 4; ++i) save_jsonl(*splits[i], out / kSplitFiles[i]);
    vocab.save(out / "vocab.txt");
    write_json(out / "manifest.json", dataset_manifest(cfg, data, vocab));
    std::cout << "wrote " << out.string() << " (" << data.source_train.size() << "/" << data.source_val.size()
              << " source, " << data.target_train.size() << "/" << data.target_val.size() << " target, vocab "
              << vocab.size() << ")\n";
    return 0;
}

int cmd_train(const fs::path& data_dir, const fs::path& out, TrainFlags& flags) {
    const TrainConfig cfg = flags.resolve();
    const DataDir d = load_data_dir(data_dir);
    ModelConfig mc = flags.model;
    mc.feature_dim = d.splits.source_train.front().regions.cols;
    mc.vocab_size = d.vocab.size();
    const DomainHeadConfig head{mc.d_model, 64, 32, cfg.n_domain_classes, cfg.grl_lambda};
    CaptionModel model = init_caption_model(mc, head, d.vocab, cfg.seed);
    auto log = open_log(flags.log_path);
    Trainer trainer(model, cfg, log.get());
    trainer.fit(d.splits.source_train, d.splits.target_train);
    save_checkpoint(model, out);
    write_json(fs::path(out.string() + ".train.json"), cfg.to_json());
    std::cout << "trained " << model.step << " steps -> " << out.string() << "\n";
    return 0;
}

int cmd_adapt(const fs::path& data_dir, const fs::path& init, const std::string& protocol, const fs::path& out,
              TrainFlags& flags) {
    TrainConfig cfg = flags.resolve();
    cfg.adaptation = parse_adaptation_mode(protocol);
    const DataDir d = load_data_dir(data_dir);
    CaptionModel model = load_checkpoint(init);
    if (model.vocab != d.vocab) throw std::runtime_error("checkpoint vocabulary differs from " + data_dir.string());
    auto log = open_log(flags.log_path);
    const std::vector<std::size_t> chosen = adapt_model(model, d.splits, cfg, log.get());
    save_checkpoint(model, out);
    json ids = json::array();
    for (const std::size_t i : chosen) ids.push_back(d.splits.target_train[i].id);
    write_json(fs::path(out.string() + ".adapt.json"),
               {{"protocol", adaptation_mode_name(cfg.adaptation)}, {"frames", ids}, {"config", cfg.to_json()}});
    std::cout << adaptation_mode_name(cfg.adaptation) << ": fine-tuned on " << chosen.size() << " frames -> "
              << out.string() << "\n";
    return 0;
}

int cmd_generate(const fs::path& ckpt, const fs::path& input, const fs::path& out, std::size_t beam,
                 const std::string& dump_preds) {
    const CaptionModel model = load_checkpoint(ckpt);
    const std::vector<Sample> samples = load_jsonl(input, model.config.feature_dim);
    std::ofstream hyps = open_out(out);
    for (const Sample& s : samples) {
        const Beam best = generate(s.regions.to_tensor(), model.config, model.params, beam,
                                   model.config.max_caption_len);
        hyps << json{{"id", s.id}, {"caption", decode_ids(best.tokens, model.vocab)}, {"logprob", best.log_prob}}
                    .dump()
             << '\n';
    }
    if (!dump_preds.empty()) {
        const PredictionSet preds = token_predictions(model, samples);
        std::ofstream dump = open_out(dump_preds);
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const auto row = preds.row(i);
            dump << json{{"probs", std::vector<Real>(row.begin(), row.end())}, {"label", preds.label(i)}}.dump()
                 << '\n';
        }
    }
    std::cout << "captioned " << samples.size() << " frames -> " << out.string() << "\n";
    return 0;
}

std::vector<std::pair<std::string, std::string>> read_hyps(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            out.emplace_back(j.at("id").get<std::string>(), j.at("caption").get<std::string>());
        } catch (const json::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

int cmd_score(const fs::path& hyps_path, const fs::path& refs_path, const fs::path& out) {
    const auto hyps = read_hyps(hyps_path);
    std::map<std::string, std::string> refs;
    for (const Sample& s : load_jsonl(refs_path))
        if (s.caption) refs[s.id] = *s.caption;
    TokenizedCorpus h, r;
    for (const auto& [id, caption] : hyps) {
        const auto it = refs.find(id);
        if (it == refs.end()) throw std::runtime_error("no reference caption for frame " + id);
        h.push_back(normalize_tokenize(caption));
        r.push_back(normalize_tokenize(it->second));
    }
    ScoreReport report;
    report.captions = score_captions(h, r);
    write_json(out, report.to_json());
    std::cout << "BLEU-1 " << report.captions.bleu[0] << "  CIDEr " << report.captions.cider << " over "
              << h.size() << " frames\n";
    return 0;
}

int cmd_calib(const fs::path& preds_path, const fs::path& out) {
    std::ifstream in(preds_path);
    if (!in) throw std::runtime_error("cannot read " + preds_path.string());
    std::unique_ptr<PredictionSet> preds;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            const auto probs = j.at("probs").get<std::vector<Real>>();
            if (!preds) preds = std::make_unique<PredictionSet>(probs.size());
            preds->add(probs, j.at("label").get<int>());
        } catch (const std::exception& e) {
            throw std::runtime_error(preds_path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    if (!preds) throw std::runtime_error(preds_path.string() + " holds no predictions");
    const CalibrationScores scores = score_calibration(*preds);
    write_json(out, {{"ece", scores.ece},
                     {"sce", scores.sce},
                     {"tace", scores.tace},
                     {"brier", scores.brier},
                     {"calibration_predictions", scores.predictions}});
    std::cout << "ECE " << scores.ece << "  Brier " << scores.brier << " over " << scores.predictions
              << " tokens\n";
    return 0;
}

int cmd_report(const fs::path& hyps_path, const fs::path& score_path, const fs::path& calib_path,
               const fs::path& stack_out, const fs::path& out) {
    const auto hyps = read_hyps(hyps_path);
    open_out(stack_out) << stack_report(hyps);
    json merged = read_json(score_path);
    const json calib = read_json(calib_path);
    for (const char* key : {"ece", "sce", "tace", "brier", "calibration_predictions"}) merged[key] = calib.at(key);
    const ScoreReport report = ScoreReport::from_json(merged);  // validates all fields are present
    write_json(out, report.to_json());
    std::cout << report.to_json().dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Domain-adversarial caption generation on region features"};
    app.require_subcommand(1);
    bool show_kernels = false;
    app.add_flag("--kernels", show_kernels, "print the selected SIMD kernel table to stderr");
    app.set_config("--config", "", "INI file, one [train] or [adapt] section of long option names");
    app.allow_config_extras(CLI::config_extras_mode::error);

    auto* gen = app.add_subcommand("gen-data", "write a synthetic two-domain dataset");
    fs::path gen_out;
    bool gen_paper = false;
    std::uint64_t gen_seed = 7;
    double gen_shift = std::nan(""), gen_tight = std::nan("");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_flag("--paper-scale", gen_paper, "512-dim features and full-size splits");
    gen->add_option("--seed", gen_seed)->capture_default_str();
    gen->add_option("--shift", gen_shift, "norm of the target-domain shift");
    gen->add_option("--tightness", gen_tight, "within-class standard deviation");

    auto* train = app.add_subcommand("train", "train a captioning model");
    fs::path train_data, train_out;
    bool train_paper = false;
    TrainFlags train_flags;
    train->add_option("--data", train_data, "dataset directory from gen-data")->required();
    train->add_option("--out", train_out, "checkpoint path")->required();
    train->add_flag("--paper-scale", train_paper, "batch 50, warmup 10000");
    train_flags.add(train, true);

    auto* adapt = app.add_subcommand("adapt", "fine-tune a checkpoint on a target subset");
    fs::path adapt_data, adapt_init, adapt_out;
    std::string protocol = "one";
    TrainFlags adapt_flags;
    adapt->add_option("--data", adapt_data)->required();
    adapt->add_option("--init", adapt_init, "checkpoint to start from")->required();
    adapt->add_option("--protocol", protocol, "uda | zero | one | few")->capture_default_str();
    adapt->add_option("--out", adapt_out, "checkpoint path")->required();
    adapt_flags.add(adapt, false);

    auto* gen_caps = app.add_subcommand("generate", "caption the frames of a JSONL split");
    fs::path g_ckpt, g_input, g_out;
    std::size_t g_beam = 5;
    std::string g_dump;
    gen_caps->add_option("--ckpt", g_ckpt)->required();
    gen_caps->add_option("--input", g_input)->required();
    gen_caps->add_option("--out", g_out, "hypotheses JSONL")->required();
    gen_caps->add_option("--beam", g_beam)->capture_default_str();
    gen_caps->add_option("--dump-preds", g_dump, "write teacher-forced token distributions here");

    auto* score = app.add_subcommand("score", "caption metrics");
    fs::path s_hyps, s_refs, s_out;
    score->add_option("--hyps", s_hyps)->required();
    score->add_option("--refs", s_refs, "JSONL samples with captions")->required();
    score->add_option("--out", s_out)->required();

    auto* calib = app.add_subcommand("calib", "calibration metrics");
    fs::path c_preds, c_out;
    calib->add_option("--preds", c_preds)->required();
    calib->add_option("--out", c_out)->required();

    auto* report = app.add_subcommand("report", "stacked captions and merged scores");
    fs::path r_hyps, r_score, r_calib, r_stack, r_out;
    report->add_option("--hyps", r_hyps)->required();
    report->add_option("--score", r_score)->required();
    report->add_option("--calib", r_calib)->required();
    report->add_option("--stack", r_stack, "stacked report text")->required();
    report->add_option("--out", r_out, "merged score report JSON")->required();

    CLI11_PARSE(app, argc, argv);
    if (show_kernels) std::cerr << "kernels: " << kernels::active().name << "\n";

    try {
        if (*gen) return cmd_gen_data(gen_out, gen_paper, gen_seed, gen_shift, gen_tight);
        if (*train) {
            if (train_paper) {
                const TrainConfig p = TrainConfig::paper_scale();
                if (train->count("--batch-size") == 0) train_flags.train.batch_size = p.batch_size;
                if (train->count("--warmup") == 0) train_flags.train.warmup = p.warmup;
                if (train->count("--max-steps") == 0) train_flags.train.max_steps = p.max_steps;
                if (train->count("--lr-factor") == 0) train_flags.train.lr_factor = p.lr_factor;
                if (train->count("--adam-eps") == 0) train_flags.train.adam_eps = p.adam_eps;
                if (train->count("--grl-lambda") == 0) train_flags.train.grl_lambda = p.grl_lambda;
            }
            return cmd_train(train_data, train_out, train_flags);
        }
        if (*adapt) return cmd_adapt(adapt_data, adapt_init, protocol, adapt_out, adapt_flags);
        if (*gen_caps) return cmd_generate(g_ckpt, g_input, g_out, g_beam, g_dump);
        if (*score) return cmd_score(s_hyps, s_refs, s_out);
        if (*calib) return cmd_calib(c_preds, c_out);
        if (*report) return cmd_report(r_hyps, r_score, r_calib, r_stack, r_out);
    } catch (const std::exception& e) {
        std::cerr << "capgen: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
