#include "optbench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "optbench/errors.hpp"
#include "optbench/rl.hpp"
#include "optbench/rng.hpp"

namespace optbench::bench {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

bool is_classification(Task t) { return t == Task::Mnist || t == Task::Cifar; }

// ---- config text parsing -------------------------------------------------

struct ConfigLine {
    int number; // 1-based file line; 0 for command-line overrides
    std::string key;
    std::string value;
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<ConfigLine> split_lines(const std::string& text,
                                    const std::vector<std::string>& overrides) {
    std::vector<ConfigLine> out;
    std::istringstream in(text);
    std::string raw;
    int number = 0;
    while (std::getline(in, raw)) {
        ++number;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        std::string line = trim(raw);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected `key = value`, got \"" + line + "\"", number);
        ConfigLine cl{number, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
        if (cl.key.empty()) throw ConfigError("missing key before '='", number);
        if (cl.value.empty()) throw ConfigError("empty value for key '" + cl.key + "'", number);
        out.push_back(std::move(cl));
    }
    for (const std::string& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override must be key=value, got \"" + ov + "\"", 0);
        ConfigLine cl{0, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1))};
        if (cl.key.empty() || cl.value.empty())
            throw ConfigError("override must be key=value, got \"" + ov + "\"", 0);
        out.push_back(std::move(cl));
    }
    return out;
}

Task parse_task(const std::string& v, int line) {
    if (v == "mnist") return Task::Mnist;
    if (v == "cifar") return Task::Cifar;
    if (v == "cartpole") return Task::Cartpole;
    if (v == "flappy") return Task::Flappy;
    throw ConfigError("unknown task '" + v + "' (mnist|cifar|cartpole|flappy)", line);
}

opt::OptimizerKind::Tag parse_optimizer(const std::string& v, int line) {
    using Tag = opt::OptimizerKind::Tag;
    if (v == "sgd") return Tag::Sgd;
    if (v == "cg") return Tag::ConjGrad;
    if (v == "lbfgs") return Tag::Lbfgs;
    if (v == "lm") return Tag::Lm;
    throw ConfigError("unknown optimizer '" + v + "' (sgd|cg|lbfgs|lm)", line);
}

opt::BetaRule parse_beta_rule(const std::string& v, int line) {
    if (v == "fletcher_reeves" || v == "fr") return opt::BetaRule::FletcherReeves;
    if (v == "polak_ribiere" || v == "pr") return opt::BetaRule::PolakRibiere;
    if (v == "hestenes_stiefel" || v == "hs") return opt::BetaRule::HestenesStiefel;
    if (v == "dai_yuan" || v == "dy") return opt::BetaRule::DaiYuan;
    throw ConfigError("unknown beta_rule '" + v +
                          "' (fletcher_reeves|polak_ribiere|hestenes_stiefel|dai_yuan or "
                          "fr|pr|hs|dy)",
                      line);
}

double parse_double(const ConfigLine& cl) {
    const char* s = cl.value.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0' || !std::isfinite(v))
        throw ConfigError("key '" + cl.key + "': not a finite number: \"" + cl.value + "\"",
                          cl.number);
    return v;
}

long long parse_int(const ConfigLine& cl, long long min_value) {
    const char* s = cl.value.c_str();
    char* end = nullptr;
    long long v = std::strtoll(s, &end, 10);
    if (end == s || *end != '\0')
        throw ConfigError("key '" + cl.key + "': not an integer: \"" + cl.value + "\"", cl.number);
    if (v < min_value)
        throw ConfigError("key '" + cl.key + "': must be >= " + std::to_string(min_value),
                          cl.number);
    return v;
}

std::uint64_t parse_u64(const ConfigLine& cl) {
    const char* s = cl.value.c_str();
    char* end = nullptr;
    unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0' || cl.value.front() == '-')
        throw ConfigError("key '" + cl.key + "': not an unsigned integer: \"" + cl.value + "\"",
                          cl.number);
    return v;
}

double parse_unit_interval(const ConfigLine& cl) {
    double v = parse_double(cl);
    if (v < 0.0 || v > 1.0)
        throw ConfigError("key '" + cl.key + "': must lie in [0, 1]", cl.number);
    return v;
}

// ---- CSV field formatting ------------------------------------------------

std::string opt_field(double v, const char* spec) {
    return std::isfinite(v) ? fmt(spec, v) : std::string();
}

double parse_csv_double(const std::string& field) {
    if (field.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::strtod(field.c_str(), nullptr);
}

// ---- SVG plotting --------------------------------------------------------

void svg_open(std::ostringstream& os, double w, double h) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
       << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"#ffffff\"/>\n";
}

void svg_text(std::ostringstream& os, double x, double y, const std::string& s,
              const char* anchor = "start", int size = 12) {
    os << "<text x=\"" << fmt("%.1f", x) << "\" y=\"" << fmt("%.1f", y) << "\" font-family=\"sans-serif\" font-size=\""
       << size << "\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
}

/// One polyline of (x, y) pairs with axes and min/max tick labels.
/// Coordinates are printed with fixed precision so identical inputs give
/// identical bytes.
void write_line_svg(const std::string& path, const std::string& title,
                    const std::string& y_label, const std::vector<double>& xs,
                    const std::vector<double>& ys) {
    const double w = 640, h = 400, left = 70, right = 16, top = 38, bottom = 42;
    std::vector<double> fx, fy;
    for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i)
        if (std::isfinite(xs[i]) && std::isfinite(ys[i])) {
            fx.push_back(xs[i]);
            fy.push_back(ys[i]);
        }

    std::ostringstream os;
    svg_open(os, w, h);
    svg_text(os, w / 2, 20, title, "middle", 14);
    if (fx.empty()) {
        svg_text(os, w / 2, h / 2, "no finite data", "middle");
        os << "</svg>\n";
    } else {
        double xmin = *std::min_element(fx.begin(), fx.end());
        double xmax = *std::max_element(fx.begin(), fx.end());
        double ymin = *std::min_element(fy.begin(), fy.end());
        double ymax = *std::max_element(fy.begin(), fy.end());
        if (xmax == xmin) {
            xmin -= 0.5;
            xmax += 0.5;
        }
        if (ymax == ymin) {
            double pad = std::abs(ymin) * 0.05 + 0.5;
            ymin -= pad;
            ymax += pad;
        }
        auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (w - left - right); };
        auto py = [&](double y) {
            return h - bottom - (y - ymin) / (ymax - ymin) * (h - top - bottom);
        };
        os << "<path d=\"M" << fmt("%.2f", left) << " " << fmt("%.2f", top) << " L"
           << fmt("%.2f", left) << " " << fmt("%.2f", h - bottom) << " L" << fmt("%.2f", w - right)
           << " " << fmt("%.2f", h - bottom) << "\" fill=\"none\" stroke=\"#333333\"/>\n";
        svg_text(os, left - 6, py(ymin) + 4, fmt("%.6g", ymin), "end", 10);
        svg_text(os, left - 6, py(ymax) + 4, fmt("%.6g", ymax), "end", 10);
        svg_text(os, px(xmin), h - bottom + 16, fmt("%.6g", xmin), "middle", 10);
        svg_text(os, px(xmax), h - bottom + 16, fmt("%.6g", xmax), "middle", 10);
        svg_text(os, left, top - 8, y_label, "start", 11);
        if (fx.size() == 1) {
            os << "<circle cx=\"" << fmt("%.2f", px(fx[0])) << "\" cy=\"" << fmt("%.2f", py(fy[0]))
               << "\" r=\"3\" fill=\"#3366aa\"/>\n";
        } else {
            os << "<polyline fill=\"none\" stroke=\"#3366aa\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < fx.size(); ++i)
                os << (i ? " " : "") << fmt("%.2f", px(fx[i])) << "," << fmt("%.2f", py(fy[i]));
            os << "\"/>\n";
        }
        os << "</svg>\n";
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << os.str();
}

void write_report_svg(const std::string& path, const std::vector<ReportRow>& rows) {
    const double w = 640, row_h = 44, left = 110, right = 20, top = 48;
    const double h = top + row_h * double(rows.empty() ? 1 : rows.size()) + 16;
    double max_wall = 1e-12;
    for (const auto& r : rows) max_wall = std::max(max_wall, r.mean_wall_time_ms);

    std::ostringstream os;
    svg_open(os, w, h);
    svg_text(os, w / 2, 22, "mean wall time per iteration (ms)", "middle", 14);
    if (rows.empty()) svg_text(os, w / 2, h / 2, "no runs", "middle");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        double y = top + row_h * double(i);
        double len = (w - left - right) * (r.mean_wall_time_ms / max_wall);
        svg_text(os, left - 8, y + 17, r.optimizer, "end");
        os << "<rect x=\"" << fmt("%.1f", left) << "\" y=\"" << fmt("%.1f", y) << "\" width=\""
           << fmt("%.2f", std::max(len, 0.5)) << "\" height=\"24\" fill=\"#3366aa\"/>\n";
        svg_text(os, left, y + 38,
                 fmt("%.3f", r.mean_wall_time_ms) + " ms, mean final loss " +
                     fmt("%.6g", r.mean_final_loss) + " (" + std::to_string(r.runs) + " run" +
                     (r.runs == 1 ? "" : "s") + ")",
                 "start", 10);
    }
    os << "</svg>\n";

    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << os.str();
}

// ---- run bookkeeping -----------------------------------------------------

losses::LossKind loss_kind_for(const ExperimentConfig& cfg) {
    if (!is_classification(cfg.task)) return losses::LossKind::MSE; // Bellman regression
    return cfg.optimizer.tag == opt::OptimizerKind::Tag::Lm ? losses::LossKind::MSE
                                                            : losses::LossKind::CrossEntropy;
}

void write_run_json(const std::string& path, const RunResult& r, Index param_count) {
    const ExperimentConfig& c = r.config;
    json j;
    j["schema"] = 1;
    j["task"] = task_name(c.task);
    j["optimizer"] = optimizer_name(c.optimizer);
    if (c.optimizer.tag == opt::OptimizerKind::Tag::ConjGrad)
        j["beta_rule"] = beta_rule_name(c.optimizer.beta_rule);
    if (c.optimizer.tag == opt::OptimizerKind::Tag::Lbfgs) {
        j["memory"] = c.optimizer.memory;
        j["max_line_search"] = c.optimizer.max_line_search;
    }
    j["lr"] = c.lr;
    j["batch_size"] = c.batch_size;
    j["iterations"] = c.iterations;
    j["epochs"] = c.epochs;
    j["subset_n"] = c.subset_n;
    j["seed"] = c.seed;
    j["loss"] = loss_kind_for(c) == losses::LossKind::MSE ? "mse" : "cross_entropy";
    if (is_classification(c.task)) {
        if (c.task == Task::Mnist) {
            j["mnist_images"] = c.mnist_images;
            j["mnist_labels"] = c.mnist_labels;
        } else {
            j["cifar_file"] = c.cifar_file;
        }
    } else {
        j["episodes"] = c.episodes;
        j["gamma"] = c.gamma;
        j["replay_capacity"] = c.replay_capacity;
        j["warmup"] = c.warmup;
        j["eps_start"] = c.eps_start;
        j["eps_end"] = c.eps_end;
    }
    j["param_count"] = param_count;
    j["records"] = r.records.size();
    j["failed"] = r.failed;
    j["failure_reason"] = r.failure_reason;
    j["final_loss"] = r.final_loss;   // NaN serializes as null
    j["final_ce"] = r.final_ce;
    double total_wall = 0.0;
    for (const auto& rec : r.records) total_wall += rec.wall_time_ms;
    j["wall_time_ms_total"] = total_wall;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << j.dump(2) << "\n";
}

/// Gather dataset rows into a batch carrying both target representations;
/// the loss picks the one it needs.
opt::Batch gather_batch(const data::Dataset& ds, const std::vector<Index>& indices,
                        Index n_classes) {
    const Index n = ds.size();
    const Index per = n > 0 ? ds.images.size() / n : 0;
    Shape bshape = ds.images.shape();
    bshape[0] = Index(indices.size());

    opt::Batch b;
    Eigen::VectorXd buf(Index(indices.size()) * per);
    Tensor targets(Shape{Index(indices.size()), n_classes});
    b.labels.reserve(indices.size());
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const Index i = indices[j];
        if (i < 0 || i >= n) throw IndexError("batch index " + std::to_string(i) + " out of range");
        buf.segment(Index(j) * per, per) = ds.images.vec().segment(i * per, per);
        const int label = ds.labels[std::size_t(i)];
        if (label < 0 || label >= n_classes)
            throw IndexError("label " + std::to_string(label) + " outside " +
                             std::to_string(n_classes) + " classes");
        targets(Index(j), Index(label)) = 1.0;
        b.labels.push_back(label);
    }
    b.inputs = Tensor(std::move(bshape), std::move(buf));
    b.targets = std::move(targets);
    return b;
}

MetricsRecord failure_row(Index iter, std::string_view) {
    MetricsRecord r;
    r.iter = iter;
    r.failure = true;
    r.accepted = 0;
    return r;
}

void run_classification(const ExperimentConfig& cfg, nn::NetworkState& model, std::ofstream& csv,
                        RunResult& out) {
    data::Dataset ds = cfg.task == Task::Mnist
                           ? data::load_mnist_idx(cfg.mnist_images, cfg.mnist_labels)
                           : data::load_cifar10_bin(cfg.cifar_file);
    if (cfg.subset_n > 0) ds = data::subset(ds, cfg.subset_n, Rng::derive(cfg.seed, 1));
    const Index n = ds.size();
    if (n == 0) throw ConfigError("dataset '" + ds.name + "' is empty");

    const Index n_classes = nn::infer_shapes(model.spec).back()[0];
    const losses::LossKind loss_kind = loss_kind_for(cfg);
    const bool lm = cfg.optimizer.tag == opt::OptimizerKind::Tag::Lm;
    opt::OptimizerState state = opt::make_state(cfg.optimizer);

    // LM consumes the whole subset each step (one step = one epoch); the
    // others walk seeded minibatch permutations.
    const Index steps_per_epoch = lm ? 1 : (n + cfg.batch_size - 1) / cfg.batch_size;
    const Index total_steps =
        cfg.iterations > 0 ? cfg.iterations : cfg.epochs * steps_per_epoch;

    std::vector<Index> all(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) all[std::size_t(i)] = i;
    const opt::Batch full_batch = gather_batch(ds, all, n_classes);

    Index step = 0;
    Index epoch = 0;
    while (step < total_steps && !out.failed) {
        std::vector<std::vector<Index>> plan;
        if (lm)
            plan.push_back(all);
        else
            plan = data::batches(n, cfg.batch_size, Rng::derive(cfg.seed, 2), epoch);
        for (const auto& idx : plan) {
            if (step >= total_steps) break;
            opt::Batch scratch;
            const opt::Batch* bp = &full_batch;
            if (!lm) {
                scratch = gather_batch(ds, idx, n_classes);
                bp = &scratch;
            }

            MetricsRecord rec;
            rec.iter = step;
            try {
                const auto t0 = std::chrono::steady_clock::now();
                opt::StepResult sr =
                    opt::optimizer_step(cfg.optimizer, std::move(state), std::move(model), *bp,
                                        loss_kind, cfg.lr);
                const auto t1 = std::chrono::steady_clock::now();
                model = std::move(sr.model);
                state = std::move(sr.state);
                rec.loss_before = sr.report.loss_before;
                rec.loss_after = sr.report.loss_after;
                rec.wall_time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
                switch (cfg.optimizer.tag) {
                case opt::OptimizerKind::Tag::Lm:
                    rec.lambda = sr.report.lambda;
                    rec.accepted = sr.report.accepted ? 1 : 0;
                    break;
                case opt::OptimizerKind::Tag::Lbfgs:
                    rec.alpha = sr.report.alpha;
                    rec.accepted = sr.report.accepted ? 1 : 0;
                    break;
                default:
                    break; // SGD/CG report nothing beyond the losses
                }
                if (!std::isfinite(rec.loss_after)) {
                    rec.failure = true;
                    out.failed = true;
                    out.failure_reason = "non-finite loss at iteration " + std::to_string(step);
                }
            } catch (const NumericError& e) {
                rec = failure_row(step, e.what());
                out.failed = true;
                out.failure_reason = e.what();
            }
            csv << csv_row(rec) << "\n";
            csv.flush();
            out.records.push_back(rec);
            ++step;
            if (out.failed) break;
        }
        ++epoch;
    }

    for (auto it = out.records.rbegin(); it != out.records.rend(); ++it)
        if (!it->failure) {
            out.final_loss = it->loss_after;
            break;
        }
    // common yardstick across optimizers regardless of the training loss
    out.final_ce = opt::batch_loss(model, full_batch, losses::LossKind::CrossEntropy);
}

void run_rl(const ExperimentConfig& cfg, nn::NetworkState& model, std::ofstream& csv,
            RunResult& out) {
    std::unique_ptr<rl::Environment> env;
    if (cfg.task == Task::Cartpole)
        env = std::make_unique<rl::CartPoleEnv>();
    else
        env = std::make_unique<rl::FlappyEnv>();

    rl::ReplayBuffer buffer(cfg.replay_capacity, Rng::derive(cfg.seed, 3));
    Rng policy_rng(Rng::derive(cfg.seed, 4));
    opt::OptimizerState state = opt::make_state(cfg.optimizer);

    const double half = 0.5 * double(cfg.episodes);
    for (Index ep = 0; ep < cfg.episodes; ++ep) {
        // linear exploration decay over the first half of the schedule
        const double t = half > 0.0 ? std::min(1.0, double(ep) / half) : 1.0;
        rl::DqnConfig dcfg;
        dcfg.gamma = cfg.gamma;
        dcfg.epsilon = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * t;
        dcfg.batch_size = cfg.batch_size;
        dcfg.lr = cfg.lr;
        dcfg.warmup = cfg.warmup;

        rl::EpisodeMetrics m = rl::dqn_train_episode(*env, model, cfg.optimizer, state, buffer,
                                                     dcfg, policy_rng,
                                                     Rng::derive(cfg.seed, 100000 + std::uint64_t(ep)));
        MetricsRecord rec;
        rec.iter = ep;
        rec.loss_before = m.mean_loss_before;
        rec.loss_after = m.mean_loss_after;
        rec.wall_time_ms = m.wall_time_ms;
        rec.episode_return = m.episode_return;
        rec.mean_q = m.mean_chosen_q;
        if (m.train_steps > 0) {
            switch (cfg.optimizer.tag) {
            case opt::OptimizerKind::Tag::Lm:
                rec.lambda = m.last_lambda;
                rec.accepted = m.last_accepted ? 1 : 0;
                break;
            case opt::OptimizerKind::Tag::Lbfgs:
                rec.alpha = m.last_alpha;
                rec.accepted = m.last_accepted ? 1 : 0;
                break;
            default:
                break;
            }
        }
        if (m.aborted) {
            rec.failure = true;
            rec.accepted = rec.accepted < 0 ? 0 : rec.accepted;
            out.failed = true;
            out.failure_reason = m.abort_reason;
        }
        csv << csv_row(rec) << "\n";
        csv.flush();
        out.records.push_back(rec);
        if (out.failed) break;
    }

    for (auto it = out.records.rbegin(); it != out.records.rend(); ++it)
        if (!it->failure && std::isfinite(it->loss_after)) {
            out.final_loss = it->loss_after;
            break;
        }
}

// ---- checkpoint primitives -------------------------------------------------

constexpr char kCheckpointMagic[4] = {'O', 'B', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T> void put(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T> T take(std::ifstream& f, const char* what) {
    T v{};
    if (!f.read(reinterpret_cast<char*>(&v), sizeof v))
        throw FormatError(std::string("checkpoint truncated reading ") + what);
    return v;
}

} // namespace

// ---- names -----------------------------------------------------------------

std::string task_name(Task task) {
    switch (task) {
    case Task::Mnist: return "mnist";
    case Task::Cifar: return "cifar";
    case Task::Cartpole: return "cartpole";
    case Task::Flappy: return "flappy";
    }
    throw ContractError("unreachable task tag");
}

std::string optimizer_name(const opt::OptimizerKind& kind) {
    switch (kind.tag) {
    case opt::OptimizerKind::Tag::Sgd: return "sgd";
    case opt::OptimizerKind::Tag::ConjGrad: return "cg";
    case opt::OptimizerKind::Tag::Lbfgs: return "lbfgs";
    case opt::OptimizerKind::Tag::Lm: return "lm";
    }
    throw ContractError("unreachable optimizer tag");
}

std::string beta_rule_name(opt::BetaRule rule) {
    switch (rule) {
    case opt::BetaRule::FletcherReeves: return "fletcher_reeves";
    case opt::BetaRule::PolakRibiere: return "polak_ribiere";
    case opt::BetaRule::HestenesStiefel: return "hestenes_stiefel";
    case opt::BetaRule::DaiYuan: return "dai_yuan";
    }
    throw ContractError("unreachable beta rule");
}

// ---- presets -----------------------------------------------------------------

ExperimentConfig default_config(Task task, opt::OptimizerKind::Tag optimizer) {
    using Tag = opt::OptimizerKind::Tag;
    ExperimentConfig c;
    c.task = task;

    switch (optimizer) {
    case Tag::Sgd: c.optimizer = opt::OptimizerKind::sgd(); break;
    // Polak-Ribiere restarts itself when successive minibatch gradients
    // decorrelate; Fletcher-Reeves compounds and diverges under that noise.
    case Tag::ConjGrad: c.optimizer = opt::OptimizerKind::conj_grad(opt::BetaRule::PolakRibiere); break;
    case Tag::Lbfgs: c.optimizer = opt::OptimizerKind::lbfgs(10, 10); break;
    case Tag::Lm: c.optimizer = opt::OptimizerKind::lm(); break;
    }

    const bool lbfgs = optimizer == Tag::Lbfgs;
    switch (task) {
    case Task::Mnist:
        c.lr = lbfgs ? 1e-6 : 0.001;
        c.batch_size = 64;
        break;
    case Task::Cifar:
        c.lr = lbfgs ? 1e-6 : 0.001;
        c.batch_size = 1000;
        break;
    case Task::Cartpole:
        c.lr = 1e-6;
        c.batch_size = 32;
        c.episodes = 50;
        c.replay_capacity = 10000;
        c.warmup = 500;
        break;
    case Task::Flappy:
        c.lr = 1e-6;
        c.batch_size = 32;
        c.episodes = 50;
        c.replay_capacity = 2000;
        c.warmup = 200;
        if (lbfgs) c.optimizer.max_line_search = 20;
        break;
    }
    if (optimizer == Tag::Lm && is_classification(task)) c.lr = 0.001; // recorded, unused by LM
    return c;
}

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
    const std::vector<ConfigLine> lines = split_lines(text, overrides);

    const ConfigLine* task_line = nullptr;
    const ConfigLine* opt_line = nullptr;
    for (const auto& cl : lines) {
        if (cl.key == "task") task_line = &cl;      // last occurrence wins
        if (cl.key == "optimizer") opt_line = &cl;
    }
    if (!task_line) throw ConfigError("missing required key 'task'");
    if (!opt_line) throw ConfigError("missing required key 'optimizer'");

    const Task task = parse_task(task_line->value, task_line->number);
    const auto tag = parse_optimizer(opt_line->value, opt_line->number);
    ExperimentConfig c = default_config(task, tag);

    for (const auto& cl : lines) {
        if (cl.key == "task")
            c.task = parse_task(cl.value, cl.number); // validated above for the winner
        else if (cl.key == "optimizer")
            c.optimizer.tag = parse_optimizer(cl.value, cl.number);
        else if (cl.key == "beta_rule")
            c.optimizer.beta_rule = parse_beta_rule(cl.value, cl.number);
        else if (cl.key == "memory")
            c.optimizer.memory = Index(parse_int(cl, 1));
        else if (cl.key == "mi")
            c.optimizer.max_line_search = Index(parse_int(cl, 1));
        else if (cl.key == "lr") {
            c.lr = parse_double(cl);
            if (c.lr <= 0.0) throw ConfigError("key 'lr': must be positive", cl.number);
        } else if (cl.key == "bs")
            c.batch_size = Index(parse_int(cl, 1));
        else if (cl.key == "iterations")
            c.iterations = Index(parse_int(cl, 0));
        else if (cl.key == "epochs")
            c.epochs = Index(parse_int(cl, 1));
        else if (cl.key == "episodes")
            c.episodes = Index(parse_int(cl, 1));
        else if (cl.key == "subset_n")
            c.subset_n = Index(parse_int(cl, 0));
        else if (cl.key == "seed")
            c.seed = parse_u64(cl);
        else if (cl.key == "mnist_images")
            c.mnist_images = cl.value;
        else if (cl.key == "mnist_labels")
            c.mnist_labels = cl.value;
        else if (cl.key == "cifar_file")
            c.cifar_file = cl.value;
        else if (cl.key == "out_dir")
            c.out_dir = cl.value;
        else if (cl.key == "gamma")
            c.gamma = parse_unit_interval(cl);
        else if (cl.key == "replay_capacity")
            c.replay_capacity = Index(parse_int(cl, 1));
        else if (cl.key == "warmup")
            c.warmup = Index(parse_int(cl, 1));
        else if (cl.key == "eps_start")
            c.eps_start = parse_unit_interval(cl);
        else if (cl.key == "eps_end")
            c.eps_end = parse_unit_interval(cl);
        else
            throw ConfigError("unknown key '" + cl.key + "'", cl.number);
    }
    return c;
}

nn::NetworkSpec task_network(Task task) {
    using namespace nn;
    switch (task) {
    case Task::Mnist:
        return {{1, 28, 28},
                {Conv2d{2, 5, 5, 1}, ReLU{}, Conv2d{2, 5, 5, 1}, ReLU{}, MaxPool2d{2, 2},
                 Flatten{}, Dense{4}, ReLU{}, Dense{10}}};
    case Task::Cifar:
        return {{3, 32, 32},
                {Conv2d{4, 5, 5, 1}, ReLU{}, Conv2d{4, 5, 5, 1}, ReLU{}, MaxPool2d{2, 2},
                 Flatten{}, Dense{8}, ReLU{}, Dense{8}, ReLU{}, Dense{10}}};
    case Task::Cartpole:
        return {{4}, {Dense{64}, ReLU{}, Dense{2}}};
    case Task::Flappy:
        return {{1, 84, 84},
                {Conv2d{8, 8, 8, 4}, ReLU{}, Conv2d{16, 4, 4, 2}, ReLU{}, Conv2d{8, 3, 3, 1},
                 ReLU{}, Flatten{}, Dense{8}, ReLU{}, Dense{2}}};
    }
    throw ContractError("unreachable task tag");
}

// ---- CSV ---------------------------------------------------------------------

std::string csv_header() {
    return "iter,loss_before,loss_after,wall_time_ms,lambda,alpha,accepted,episode_return,mean_q";
}

std::string csv_row(const MetricsRecord& r) {
    std::ostringstream os;
    os << r.iter << ',';
    if (r.failure) {
        os << "nan,nan";
    } else {
        os << opt_field(r.loss_before, "%.12g") << ',' << opt_field(r.loss_after, "%.12g");
    }
    os << ',' << fmt("%.3f", r.wall_time_ms);
    os << ',' << opt_field(r.lambda, "%.12g");
    os << ',' << opt_field(r.alpha, "%.12g");
    os << ',';
    if (r.accepted >= 0) os << (r.accepted ? 1 : 0);
    os << ',' << opt_field(r.episode_return, "%.12g");
    os << ',' << opt_field(r.mean_q, "%.12g");
    return os.str();
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw FormatError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != csv_header())
        throw FormatError(path + ": unexpected header \"" + line + "\"");

    std::vector<MetricsRecord> out;
    int number = 1;
    while (std::getline(f, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                fields.push_back(cur);
                cur.clear();
            } else
                cur += ch;
        }
        fields.push_back(cur);
        if (fields.size() != 9)
            throw FormatError(path + ":" + std::to_string(number) + ": expected 9 fields, got " +
                              std::to_string(fields.size()));
        MetricsRecord r;
        r.iter = Index(std::strtoll(fields[0].c_str(), nullptr, 10));
        r.loss_before = parse_csv_double(fields[1]);
        r.loss_after = parse_csv_double(fields[2]);
        r.wall_time_ms = parse_csv_double(fields[3]);
        r.lambda = parse_csv_double(fields[4]);
        r.alpha = parse_csv_double(fields[5]);
        r.accepted = fields[6].empty() ? -1 : int(std::strtol(fields[6].c_str(), nullptr, 10));
        r.episode_return = parse_csv_double(fields[7]);
        r.mean_q = parse_csv_double(fields[8]);
        r.failure = !fields[1].empty() && !std::isfinite(r.loss_before);
        out.push_back(r);
    }
    return out;
}

// ---- experiment driver ---------------------------------------------------------

RunResult run_experiment(const ExperimentConfig& config) {
    if (config.lr <= 0.0 || !std::isfinite(config.lr)) throw ConfigError("lr must be positive");
    if (config.batch_size < 1) throw ConfigError("bs must be >= 1");
    if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (config.out_dir.empty()) throw ConfigError("out_dir must not be empty");

    std::error_code ec;
    fs::create_directories(config.out_dir, ec);
    if (ec) throw Error("cannot create " + config.out_dir + ": " + ec.message());

    RunResult result;
    result.config = config;
    const nn::NetworkSpec spec = task_network(config.task);
    nn::NetworkState model = nn::init_params(spec, Rng::derive(config.seed, 0));
    const Index params = model.params.size();

    const std::string metrics_path = config.out_dir + "/metrics.csv";
    std::ofstream csv(metrics_path, std::ios::binary);
    if (!csv) throw Error("cannot write " + metrics_path);
    csv << csv_header() << "\n";
    csv.flush();

    if (is_classification(config.task))
        run_classification(config, model, csv, result);
    else
        run_rl(config, model, csv, result);
    csv.close();

    result.final_model = std::move(model);

    std::vector<double> xs, ys;
    for (const auto& rec : result.records) {
        xs.push_back(double(rec.iter));
        ys.push_back(is_classification(config.task) ? rec.loss_after : rec.episode_return);
    }
    const std::string curve_label =
        is_classification(config.task) ? "training loss" : "episode return";
    write_line_svg(config.out_dir + "/curves.svg",
                   task_name(config.task) + " / " + optimizer_name(config.optimizer), curve_label,
                   xs, ys);
    write_run_json(config.out_dir + "/run.json", result, params);
    write_checkpoint(config.out_dir + "/checkpoint.bin", result.final_model);
    return result;
}

// ---- report ---------------------------------------------------------------------

Report emit_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    struct Agg {
        Index runs = 0;
        double wall_sum = 0.0;
        Index wall_count = 0;
        double final_sum = 0.0;
        Index final_count = 0;
    };
    std::map<std::string, Agg> by_optimizer;

    for (const std::string& dir : run_dirs) {
        const std::string json_path = dir + "/run.json";
        std::ifstream jf(json_path, std::ios::binary);
        if (!jf) throw ReportError("run directory '" + dir + "': missing run.json");
        json meta = json::parse(jf, nullptr, false);
        if (meta.is_discarded() || !meta.contains("optimizer") || !meta["optimizer"].is_string())
            throw ReportError("run directory '" + dir + "': unreadable run.json");
        const std::string name = meta["optimizer"].get<std::string>();

        std::vector<MetricsRecord> records;
        try {
            records = read_metrics_csv(dir + "/metrics.csv");
        } catch (const FormatError& e) {
            throw ReportError("run directory '" + dir + "': " + e.what());
        }

        Agg& agg = by_optimizer[name];
        agg.runs += 1;
        double final_loss = std::numeric_limits<double>::quiet_NaN();
        for (const auto& r : records) {
            if (r.failure) continue;
            agg.wall_sum += r.wall_time_ms;
            agg.wall_count += 1;
            if (std::isfinite(r.loss_after)) final_loss = r.loss_after;
        }
        if (std::isfinite(final_loss)) {
            agg.final_sum += final_loss;
            agg.final_count += 1;
        }
    }

    Report report;
    for (const auto& [name, agg] : by_optimizer) {
        ReportRow row;
        row.optimizer = name;
        row.runs = agg.runs;
        row.iterations = agg.wall_count;
        row.mean_wall_time_ms = agg.wall_count > 0 ? agg.wall_sum / double(agg.wall_count)
                                                   : std::numeric_limits<double>::quiet_NaN();
        row.mean_final_loss = agg.final_count > 0 ? agg.final_sum / double(agg.final_count)
                                                  : std::numeric_limits<double>::quiet_NaN();
        report.rows.push_back(std::move(row));
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error("cannot create " + out_dir + ": " + ec.message());

    const std::string csv_path = out_dir + "/report.csv";
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw Error("cannot write " + csv_path);
    f << "optimizer,runs,iterations,mean_wall_time_ms,mean_final_loss\n";
    for (const auto& row : report.rows)
        f << row.optimizer << ',' << row.runs << ',' << row.iterations << ','
          << fmt("%.6f", row.mean_wall_time_ms) << ',' << fmt("%.12g", row.mean_final_loss)
          << "\n";
    f.close();

    write_report_svg(out_dir + "/report.svg", report.rows);
    return report;
}

// ---- checkpoints -------------------------------------------------------------------

std::string spec_to_string(const nn::NetworkSpec& spec) {
    std::ostringstream os;
    os << "input=";
    for (std::size_t i = 0; i < spec.input_shape.size(); ++i)
        os << (i ? "x" : "") << spec.input_shape[i];
    for (const auto& layer : spec.layers) {
        os << ';';
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, nn::Conv2d>)
                    os << "conv(" << l.out_channels << ',' << l.kernel_h << ',' << l.kernel_w
                       << ',' << l.stride << ')';
                else if constexpr (std::is_same_v<L, nn::MaxPool2d>)
                    os << "pool(" << l.window << ',' << l.stride << ')';
                else if constexpr (std::is_same_v<L, nn::Dense>)
                    os << "dense(" << l.out_features << ')';
                else if constexpr (std::is_same_v<L, nn::ReLU>)
                    os << "relu";
                else
                    os << "flatten";
            },
            layer);
    }
    return os.str();
}

namespace {

std::vector<Index> parse_index_list(const std::string& s, char sep, const std::string& what) {
    std::vector<Index> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        const char* c = cur.c_str();
        char* end = nullptr;
        long long v = std::strtoll(c, &end, 10);
        if (end == c || *end != '\0')
            throw FormatError("network spec: bad " + what + " \"" + cur + "\"");
        out.push_back(Index(v));
    }
    if (out.empty()) throw FormatError("network spec: empty " + what);
    return out;
}

} // namespace

nn::NetworkSpec spec_from_string(const std::string& text) {
    nn::NetworkSpec spec;
    std::istringstream in(text);
    std::string token;
    bool first = true;
    while (std::getline(in, token, ';')) {
        if (first) {
            first = false;
            if (token.rfind("input=", 0) != 0)
                throw FormatError("network spec must start with input=..., got \"" + token + "\"");
            spec.input_shape = parse_index_list(token.substr(6), 'x', "input dimension");
            continue;
        }
        std::string name = token;
        std::vector<Index> args;
        if (auto open = token.find('('); open != std::string::npos) {
            if (token.back() != ')')
                throw FormatError("network spec: unbalanced parentheses in \"" + token + "\"");
            name = token.substr(0, open);
            args = parse_index_list(token.substr(open + 1, token.size() - open - 2), ',',
                                    "argument");
        }
        if (name == "conv" && args.size() == 4)
            spec.layers.push_back(nn::Conv2d{args[0], args[1], args[2], args[3]});
        else if (name == "pool" && args.size() == 2)
            spec.layers.push_back(nn::MaxPool2d{args[0], args[1]});
        else if (name == "dense" && args.size() == 1)
            spec.layers.push_back(nn::Dense{args[0]});
        else if (name == "relu" && args.empty())
            spec.layers.push_back(nn::ReLU{});
        else if (name == "flatten" && args.empty())
            spec.layers.push_back(nn::Flatten{});
        else
            throw FormatError("network spec: unknown layer \"" + token + "\"");
    }
    if (first) throw FormatError("network spec is empty");
    nn::infer_shapes(spec); // validate dimensions before returning
    return spec;
}

void write_checkpoint(const std::string& path, const nn::NetworkState& state) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f.write(kCheckpointMagic, 4);
    put(f, kCheckpointVersion);
    const std::string spec = spec_to_string(state.spec);
    put(f, std::uint32_t(spec.size()));
    f.write(spec.data(), std::streamsize(spec.size()));
    put(f, std::uint64_t(state.params.size()));
    f.write(reinterpret_cast<const char*>(state.params.data()),
            std::streamsize(std::size_t(state.params.size()) * sizeof(double)));
    if (!f) throw Error("short write to " + path);
}

nn::NetworkState read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw FormatError(path + ": not a checkpoint (bad magic)");
    const auto version = take<std::uint32_t>(f, "version");
    if (version != kCheckpointVersion)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    const auto spec_len = take<std::uint32_t>(f, "spec length");
    std::string spec_text(spec_len, '\0');
    if (!f.read(spec_text.data(), spec_len)) throw FormatError(path + ": truncated spec string");

    nn::NetworkState state;
    state.spec = spec_from_string(spec_text);
    state.layout = nn::param_layout(state.spec);
    const auto count = take<std::uint64_t>(f, "parameter count");
    if (Index(count) != nn::param_count(state.spec))
        throw FormatError(path + ": parameter count " + std::to_string(count) +
                          " does not match spec (" + std::to_string(nn::param_count(state.spec)) +
                          ")");
    state.params.resize(Index(count));
    if (!f.read(reinterpret_cast<char*>(state.params.data()),
                std::streamsize(std::size_t(count) * sizeof(double))))
        throw FormatError(path + ": truncated parameter vector");
    return state;
}

} // namespace optbench::bench
