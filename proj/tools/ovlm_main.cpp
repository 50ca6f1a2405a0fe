#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "ovlm/bench.hpp"
#include "ovlm/checkpoint.hpp"
#include "ovlm/costmodel.hpp"
#include "ovlm/lm.hpp"
#include "ovlm/model.hpp"
#include "ovlm/training.hpp"
#include "ovlm/vision.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitRuntime = 4;

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ovlm::InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw ovlm::InputError("cannot write '" + path + "'");
    f << content;
}

std::vector<ovlm::TrainSample> load_caption_samples(const std::string& path) {
    auto ds = ovlm::read_caption_dataset(path);
    for (const auto& wmsg : ds.warnings) std::cerr << "warning: " << path << " " << wmsg << "\n";
    std::vector<ovlm::TrainSample> samples;
    for (const auto& r : ds.records) {
        samples.push_back({ovlm::read_ppm(r.image), r.prompt, r.response});
    }
    return samples;
}

// Pair files written by `dpo-pairs`.
std::vector<ovlm::DpoSample> load_pair_samples(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ovlm::InputError("cannot open pair file '" + path + "'");
    std::vector<ovlm::DpoSample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            ovlm::DpoSample s;
            s.image = ovlm::read_ppm(j.at("image").get<std::string>());
            s.prompt = j.at("prompt").get<std::string>();
            s.chosen = j.at("chosen").get<std::string>();
            s.rejected = j.at("rejected").get<std::string>();
            out.push_back(std::move(s));
        } catch (const std::exception& e) {
            std::cerr << "warning: " << path << " line " << line_no << ": " << e.what() << "\n";
        }
    }
    if (out.empty()) throw ovlm::InputError("pair file '" + path + "' has no valid records");
    return out;
}

std::vector<int> parse_ratios(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    if (out.empty()) throw ovlm::ConfigError("empty ratio list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OmniVLM-style desk-scale VLM runtime"};
    app.require_subcommand(1);

    // init
    auto* init = app.add_subcommand("init", "write a randomly initialized checkpoint");
    std::string init_config, init_out = "model.ovlm", init_compress;
    uint64_t init_seed = 0;
    int init_ratio = 0;
    init->add_option("--config", init_config, "ModelConfig JSON file (default: toy config)");
    init->add_option("--out", init_out, "output checkpoint path")->required();
    init->add_option("--seed", init_seed, "init seed");
    init->add_option("--compress", init_compress, "compression strategy: reshape|conv1d|conv2d");
    init->add_option("--ratio", init_ratio, "compression ratio: 1|3|9|81");

    // generate
    auto* gen = app.add_subcommand("generate", "run the image+prompt pipeline");
    std::string gen_ckpt, gen_image, gen_prompt;
    int gen_max_new = 64;
    bool gen_greedy = false, gen_verbose = false;
    double gen_temp = 1.0;
    uint64_t gen_seed = 0;
    gen->add_option("--checkpoint", gen_ckpt)->required();
    gen->add_option("--image", gen_image, "PPM (P6) image")->required();
    gen->add_option("--prompt", gen_prompt)->required();
    gen->add_option("--max-new", gen_max_new);
    gen->add_flag("--greedy", gen_greedy, "deterministic argmax decoding");
    gen->add_option("--temperature", gen_temp, "sampling temperature");
    gen->add_option("--seed", gen_seed, "sampling seed");
    gen->add_flag("--verbose", gen_verbose, "include token accounting in the timing JSON");

    // train
    auto* train = app.add_subcommand("train", "run one training stage");
    std::string tr_ckpt, tr_out, tr_stage = "pretrain", tr_data, tr_val, tr_metrics;
    ovlm::TrainConfig tr_cfg;
    double tr_lr = 0.1, tr_beta = 0.1, tr_tau = 0.3;
    train->add_option("--checkpoint", tr_ckpt)->required();
    train->add_option("--out", tr_out, "output checkpoint")->required();
    train->add_option("--stage", tr_stage, "pretrain|sft|dpo");
    train->add_option("--data", tr_data, "JSONL dataset (captions/QA, or pair file for dpo)")
        ->required();
    train->add_option("--val", tr_val, "validation caption JSONL");
    train->add_option("--steps", tr_cfg.steps);
    train->add_option("--batch-size", tr_cfg.batch_size);
    train->add_option("--lr", tr_lr);
    train->add_option("--beta", tr_beta, "DPO temperature");
    train->add_option("--tau", tr_tau, "max normalized edit distance");
    train->add_option("--seed", tr_cfg.seed);
    train->add_option("--metrics", tr_metrics, "metrics CSV output path");

    // dpo-pairs
    auto* pairs = app.add_subcommand("dpo-pairs", "build preference pairs from edit records");
    std::string pr_in, pr_out;
    double pr_tau = 0.3;
    pairs->add_option("--in", pr_in, "records JSONL {image,prompt,original,edited}")->required();
    pairs->add_option("--out", pr_out, "pair file JSONL")->required();
    pairs->add_option("--tau", pr_tau);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "compression-ratio training sweep");
    std::string sw_config, sw_data, sw_val, sw_ratios = "1,3,9,81", sw_csv = "sweep.csv",
                sw_json = "sweep.json";
    ovlm::TrainConfig sw_cfg;
    double sw_lr = 0.1;
    sweep->add_option("--config", sw_config, "ModelConfig JSON file");
    sweep->add_option("--data", sw_data, "caption JSONL")->required();
    sweep->add_option("--val", sw_val, "validation caption JSONL");
    sweep->add_option("--ratios", sw_ratios);
    sweep->add_option("--steps", sw_cfg.steps);
    sweep->add_option("--batch-size", sw_cfg.batch_size);
    sweep->add_option("--lr", sw_lr);
    sweep->add_option("--seed", sw_cfg.seed);
    sweep->add_option("--eval-interval", sw_cfg.eval_interval);
    sweep->add_option("--out-csv", sw_csv);
    sweep->add_option("--out-json", sw_json);

    // bench
    auto* bench = app.add_subcommand("bench", "TTFT / decode-speed matrix");
    std::string bn_ckpt, bn_ratios = "1,3,9,81", bn_out = "report.json";
    int bn_runs = 5, bn_warmup = 2, bn_decode = 128;
    uint64_t bn_seed = 0;
    bench->add_option("--checkpoint", bn_ckpt)->required();
    bench->add_option("--ratios", bn_ratios);
    bench->add_option("--runs", bn_runs);
    bench->add_option("--warmup", bn_warmup);
    bench->add_option("--decode-tokens", bn_decode);
    bench->add_option("--seed", bn_seed);
    bench->add_option("--out", bn_out, "JSON report path (CSV sidecar alongside)");

    // cost
    auto* cost = app.add_subcommand("cost", "analytic token/energy cost report");
    int c_width = 0, c_height = 0;
    double c_jpt = 0.7, c_battery_kj = 50.0;
    cost->add_option("--width", c_width)->required();
    cost->add_option("--height", c_height)->required();
    cost->add_option("--jpt", c_jpt, "joules per token");
    cost->add_option("--battery-kj", c_battery_kj);

    // inspect
    auto* inspect = app.add_subcommand("inspect", "print checkpoint header and tensor table");
    std::string in_ckpt;
    inspect->add_option("--checkpoint", in_ckpt)->required();

    // dataset
    auto* dataset = app.add_subcommand("dataset", "write a synthetic PPM+JSONL caption dataset");
    std::string ds_out;
    int ds_count = 64, ds_image_size = 216;
    uint64_t ds_seed = 0;
    dataset->add_option("--out", ds_out, "output directory")->required();
    dataset->add_option("--count", ds_count);
    dataset->add_option("--image-size", ds_image_size);
    dataset->add_option("--seed", ds_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*init) {
            ovlm::ModelConfig cfg;
            if (!init_config.empty()) cfg = ovlm::ModelConfig::from_json(read_file(init_config));
            if (!init_compress.empty()) {
                cfg.strategy.kind = ovlm::strategy_kind_from_name(init_compress);
            }
            if (init_ratio != 0) cfg.strategy.ratio = init_ratio;
            cfg.validate();
            ovlm::Weights w = ovlm::init_weights(cfg, init_seed);
            ovlm::save_checkpoint(init_out, cfg, w);
            std::cerr << "wrote " << init_out << " (" << w.param_count() << " params, "
                      << ovlm::strategy_kind_name(cfg.strategy.kind) << " r="
                      << cfg.strategy.ratio << ")\n";
        } else if (*gen) {
            auto ckpt = ovlm::load_checkpoint(gen_ckpt);
            ovlm::Image img = ovlm::read_ppm(gen_image);
            ovlm::GenerateParams params;
            params.max_new = gen_max_new;
            params.greedy = gen_greedy || gen_temp <= 1e-6;
            params.temperature = static_cast<float>(gen_temp);
            params.seed = gen_seed;
            ovlm::GenerationResult res =
                ovlm::generate(img, gen_prompt, ckpt.config, ckpt.weights, params);
            std::cout << res.text << "\n";
            nlohmann::json timing = {{"ttft_ms", res.ttft_seconds() * 1e3},
                                     {"decode_tps", res.decode_tokens_per_second()}};
            if (gen_verbose) {
                timing["image_tokens"] = res.image_tokens;
                timing["prefill_tokens"] = res.prefill_tokens;
                timing["generated_tokens"] = res.token_ids.size();
            }
            std::cerr << timing.dump() << "\n";
        } else if (*train) {
            auto ckpt = ovlm::load_checkpoint(tr_ckpt);
            tr_cfg.stage = ovlm::stage_from_name(tr_stage);
            tr_cfg.learning_rate = static_cast<ovlm::real>(tr_lr);
            tr_cfg.beta = static_cast<ovlm::real>(tr_beta);
            tr_cfg.tau = static_cast<ovlm::real>(tr_tau);
            std::vector<ovlm::TrainSample> captions;
            std::vector<ovlm::DpoSample> dpo;
            if (tr_cfg.stage == ovlm::Stage::DPO) {
                dpo = load_pair_samples(tr_data);
            } else {
                captions = load_caption_samples(tr_data);
            }
            std::vector<ovlm::TrainSample> val;
            if (!tr_val.empty()) val = load_caption_samples(tr_val);
            ovlm::TrainOutput out =
                ovlm::train_stage(tr_cfg, ckpt.config, ckpt.weights, captions, dpo, val);
            ovlm::save_checkpoint(tr_out, ckpt.config, ckpt.weights);
            if (!tr_metrics.empty()) ovlm::write_metrics_csv(tr_metrics, out.log);
            std::cerr << "stage " << tr_stage << ": loss " << out.initial_loss << " -> "
                      << out.final_loss << " over " << tr_cfg.steps << " steps\n";
        } else if (*pairs) {
            auto ds = ovlm::read_dpo_dataset(pr_in);
            for (const auto& wmsg : ds.warnings) std::cerr << "warning: " << wmsg << "\n";
            ovlm::PairBuildResult built =
                ovlm::build_pairs(ds.records, static_cast<ovlm::real>(pr_tau));
            std::ofstream out(pr_out);
            if (!out) throw ovlm::InputError("cannot write '" + pr_out + "'");
            for (const auto& p : built.admitted) {
                nlohmann::json j = {{"prompt", p.prompt},
                                    {"image", p.image},
                                    {"chosen", p.chosen},
                                    {"rejected", p.rejected},
                                    {"edit_distance", p.edit_distance},
                                    {"normalized_distance", p.normalized_distance}};
                out << j.dump() << "\n";
            }
            for (const auto& line : built.rejected_report) std::cerr << "rejected: " << line << "\n";
            std::cerr << "admitted " << built.admitted.size() << "/" << ds.records.size()
                      << " pairs (tau=" << pr_tau << ")\n";
        } else if (*sweep) {
            ovlm::ModelConfig cfg;
            if (!sw_config.empty()) cfg = ovlm::ModelConfig::from_json(read_file(sw_config));
            sw_cfg.learning_rate = static_cast<ovlm::real>(sw_lr);
            std::vector<ovlm::TrainSample> data = load_caption_samples(sw_data);
            std::vector<ovlm::TrainSample> val;
            if (!sw_val.empty()) {
                val = load_caption_samples(sw_val);
            } else {
                // hold out the last quarter
                const size_t split = data.size() - std::max<size_t>(1, data.size() / 4);
                val.assign(data.begin() + static_cast<long>(split), data.end());
                data.resize(split);
            }
            ovlm::SweepResult res =
                ovlm::ratio_sweep(cfg, parse_ratios(sw_ratios), sw_cfg, data, val);
            write_file(sw_csv, res.to_csv());
            write_file(sw_json, res.to_json());
            std::cerr << "sweep curves written to " << sw_csv << " and " << sw_json << "\n";
        } else if (*bench) {
            auto ckpt = ovlm::load_checkpoint(bn_ckpt);
            ovlm::BenchOptions opts;
            opts.runs = bn_runs;
            opts.warmup = bn_warmup;
            opts.decode_tokens = bn_decode;
            auto reports = ovlm::run_matrix(ckpt.config, ckpt.weights, parse_ratios(bn_ratios),
                                            opts, bn_seed);
            write_file(bn_out, ovlm::reports_to_json(reports));
            std::string csv_path = bn_out;
            const auto dot = csv_path.rfind('.');
            csv_path = (dot == std::string::npos ? csv_path : csv_path.substr(0, dot)) + ".csv";
            write_file(csv_path, ovlm::reports_to_csv(reports));
            std::cout << ovlm::reports_to_table(reports);
        } else if (*cost) {
            ovlm::LMConfig lm;  // toy default dims for the FLOP estimate
            ovlm::CostReport rep =
                ovlm::make_cost_report(c_width, c_height, c_jpt, c_battery_kj * 1000.0, lm);
            std::cout << rep.to_json() << "\n";
        } else if (*inspect) {
            auto ckpt = ovlm::load_checkpoint(in_ckpt);
            std::cout << "config: " << ckpt.config.to_json() << "\n";
            for (const auto& name : ckpt.weights.names()) {
                std::cout << name << " " << ovlm::shape_str(ckpt.weights.at(name).shape()) << "\n";
            }
            std::cout << "total parameters: " << ckpt.weights.param_count() << "\n";
        } else if (*dataset) {
            ovlm::write_synthetic_dataset(ds_out, ds_count, ds_image_size, ds_seed);
            std::cerr << "wrote " << ds_count << " samples to " << ds_out << "\n";
        }
    } catch (const ovlm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ovlm::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const ovlm::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
