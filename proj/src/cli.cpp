#include "beastpipe/cli.hpp"

#include <signal.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <sstream>

#include "beastpipe/checkpoint.hpp"
#include "beastpipe/env_server.hpp"
#include "beastpipe/log.hpp"
#include "beastpipe/mono.hpp"
#include "beastpipe/poly.hpp"

namespace beastpipe::cli {

namespace {

std::string default_logdir() {
  const char* env = std::getenv("BEASTPIPE_LOGDIR");
  return env && *env ? env : "logs";
}

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : sep) + s;
  return out;
}

std::vector<HostPort> parse_addresses(const std::string& text) {
  std::vector<HostPort> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_host_port(item));
  }
  if (out.empty()) throw ConfigError("server_addresses must not be empty");
  return out;
}

struct TrainFlags {
  TrainConfig cfg;
  std::string logdir = default_logdir();
};

void add_training_flags(CLI::App* cmd, TrainFlags& f) {
  TrainConfig& c = f.cfg;
  cmd->add_option("--num_actors", c.num_actors, "Actor threads")->capture_default_str();
  cmd->add_option("--batch_size", c.batch_size, "Rollouts per learner step")->capture_default_str();
  cmd->add_option("--unroll_length", c.unroll_length, "Transitions per rollout")->capture_default_str();
  cmd->add_option("--total_steps", c.total_steps, "Environment frames to train for")
      ->capture_default_str();
  cmd->add_option("--hidden_size", c.hidden_size, "MLP hidden units")->capture_default_str();
  cmd->add_option("--learning_rate", c.learning_rate, "RMSProp learning rate")->capture_default_str();
  cmd->add_option("--alpha", c.alpha, "RMSProp smoothing constant")->capture_default_str();
  cmd->add_option("--epsilon", c.epsilon, "RMSProp epsilon")->capture_default_str();
  cmd->add_option("--grad_norm_clipping", c.grad_norm_clipping, "Global gradient norm limit")
      ->capture_default_str();
  cmd->add_option("--discounting", c.vtrace.discount, "Discount factor")->capture_default_str();
  cmd->add_option("--pg_cost", c.vtrace.pg_cost, "Policy-gradient loss weight")->capture_default_str();
  cmd->add_option("--baseline_cost", c.vtrace.baseline_cost, "Baseline loss weight")
      ->capture_default_str();
  cmd->add_option("--entropy_cost", c.vtrace.entropy_cost, "Entropy loss weight")
      ->capture_default_str();
  cmd->add_option("--rho_bar", c.vtrace.rho_bar, "Importance weight clip")->capture_default_str();
  cmd->add_option("--c_bar", c.vtrace.c_bar, "Trace coefficient clip")->capture_default_str();
  cmd->add_option("--seed", c.seed, "Master seed")->capture_default_str();
  cmd->add_option("--logdir", f.logdir, "Directory for logs.csv and checkpoints")
      ->capture_default_str();
  cmd->add_option("--checkpoint_every", c.checkpoint_every,
                  "Write a checkpoint every N learner steps (0: final only)")
      ->capture_default_str();
}

void print_progress(std::ostream& out, const MetricsRecord& rec) {
  out << "step " << rec.step << " frames " << rec.frames << " mean_episode_return "
      << rec.mean_episode_return << " total_loss " << rec.losses.total << " fps "
      << static_cast<std::int64_t>(rec.fps) << std::endl;
}

Learner::Callback progress_printer(std::ostream& out) {
  auto last = std::make_shared<std::chrono::steady_clock::time_point>();
  return [&out, last](const MetricsRecord& rec) {
    const auto now = std::chrono::steady_clock::now();
    if (rec.step == 1 || now - *last >= std::chrono::seconds(5)) {
      *last = now;
      print_progress(out, rec);
    }
  };
}

int serve_env(const std::string& env_name, const std::string& address, int max_connections,
              std::ostream& out) {
  EnvFactory factory = env_factory(env_name);
  if (max_connections < 1) throw ConfigError("max_connections must be >= 1");
  const HostPort addr = parse_host_port(address);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  EnvServer server(addr, factory, max_connections);
  try {
    server.start();
  } catch (const ConnectError& e) {
    pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
    throw ConfigError(std::string("bind failed: ") + e.what());
  }
  out << "serving " << env_name << " on " << server.bound_address().str() << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  out << "stopped" << std::endl;
  return kOk;
}

int evaluate(const std::string& checkpoint, const std::string& env_name, std::int64_t episodes,
             std::ostream& out) {
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  EnvFactory factory = env_factory(env_name);
  const ModelParams params = load_checkpoint(checkpoint);
  auto env = factory();
  const EnvSpec spec = env->spec();
  if (params.obs_dim() != num_elements(spec.obs.dims)) {
    throw ConfigError("checkpoint W1 expects obs_dim " + std::to_string(params.obs_dim()) +
                      ", env " + env_name + " has " +
                      std::to_string(num_elements(spec.obs.dims)));
  }
  if (params.num_actions() != spec.num_actions) {
    throw ConfigError("checkpoint Wp has num_actions " + std::to_string(params.num_actions()) +
                      ", env " + env_name + " has " + std::to_string(spec.num_actions));
  }
  double sum = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::int64_t k = 0; k < episodes; ++k) {
    NDArray obs = env->reset();
    double ret = 0.0;
    for (;;) {
      const MlpOutput o = mlp_forward(params, obs.reshaped({1, obs.size()}));
      const StepResult s = env->step(argmax_rows(o.logits)[0]);
      ret += s.reward;
      if (s.done) break;
      obs = s.observation;
    }
    sum += ret;
    lo = std::min(lo, ret);
    hi = std::max(hi, ret);
  }
  out << "episodes " << episodes << " mean " << sum / static_cast<double>(episodes) << " min "
      << lo << " max " << hi << std::endl;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Actor-learner reinforcement learning pipeline", "beastpipe"};
  app.require_subcommand(1);

  std::string serve_env_name = "grid5";
  std::string serve_address = "127.0.0.1:4431";
  int max_connections = 64;
  auto* serve = app.add_subcommand("serve-env", "Serve an environment over TCP");
  serve->add_option("--env", serve_env_name, "Environment name (" + join(env_names(), ", ") + ")")
      ->capture_default_str();
  serve->add_option("--address", serve_address, "HOST:PORT to listen on")->capture_default_str();
  serve->add_option("--max_connections", max_connections, "Concurrent sessions")
      ->capture_default_str();

  TrainFlags poly;
  std::string addresses = "127.0.0.1:4431";
  auto* train = app.add_subcommand("train", "Train against environment servers");
  train->add_option("--server_addresses", addresses, "Comma-separated HOST:PORT list")
      ->capture_default_str();
  add_training_flags(train, poly);
  train->add_option("--num_inference_threads", poly.cfg.num_inference_threads,
                    "Inference threads")
      ->capture_default_str();
  train->add_option("--max_inference_batch", poly.cfg.max_inference_batch,
                    "Largest inference batch (0: num_actors)")
      ->capture_default_str();
  train->add_option("--min_inference_batch", poly.cfg.min_inference_batch,
                    "Requests to wait for before a forward pass")
      ->capture_default_str();
  train->add_option("--inference_timeout_us", poly.cfg.inference_timeout_us,
                    "Longest wait for min_inference_batch")
      ->capture_default_str();
  train->add_option("--connect_retries", poly.cfg.connect_retries,
                    "Connection attempts before giving up")
      ->capture_default_str();

  TrainFlags mono;
  std::string mono_env = "grid5";
  auto* train_mono = app.add_subcommand("train-mono", "Train in a single process");
  train_mono->add_option("--env", mono_env, "Environment name (" + join(env_names(), ", ") + ")")
      ->capture_default_str();
  add_training_flags(train_mono, mono);
  train_mono->add_option("--num_buffers", mono.cfg.num_buffers,
                         "Shared rollout buffers (0: max(2*batch_size, num_actors+1))")
      ->capture_default_str();
  train_mono->add_option("--num_learner_threads", mono.cfg.num_learner_threads,
                         "Learner threads")
      ->capture_default_str();

  std::string checkpoint = (std::filesystem::path(default_logdir()) / "model.tbst").string();
  std::string test_env = "grid5";
  std::int64_t episodes = 10;
  auto* test = app.add_subcommand("test", "Evaluate a checkpoint with the greedy policy");
  test->add_option("--checkpoint", checkpoint, "Checkpoint file")->capture_default_str();
  test->add_option("--env", test_env, "Environment name (" + join(env_names(), ", ") + ")")
      ->capture_default_str();
  test->add_option("--episodes", episodes, "Episodes to run")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return kUsage;
  }

  try {
    if (*serve) return serve_env(serve_env_name, serve_address, max_connections, out);
    if (*train) {
      poly.cfg.server_addresses = parse_addresses(addresses);
      poly.cfg.logdir = poly.logdir;
      poly.cfg.validate_poly();
      const PolyResult res = run_poly(poly.cfg, progress_printer(out));
      print_progress(out, res.last);
      out << "done in " << res.seconds << " s; checkpoint " << (poly.cfg.logdir / "model.tbst").string()
          << std::endl;
      return kOk;
    }
    if (*train_mono) {
      mono.cfg.logdir = mono.logdir;
      mono.cfg.validate_mono();
      const MonoResult res = run_mono(mono.cfg, env_factory(mono_env), progress_printer(out));
      print_progress(out, res.last);
      out << "done in " << res.seconds << " s; checkpoint " << (mono.cfg.logdir / "model.tbst").string()
          << std::endl;
      return kOk;
    }
    if (*test) return evaluate(checkpoint, test_env, episodes, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConnectError& e) {
    err << "error: " << e.what() << "\n";
    return kConnectivity;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace beastpipe::cli
