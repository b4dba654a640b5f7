// alt-planner: batch simulation studies and the live advisor service.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

// Eigen before httplib: <resolv.h> defines a _res macro that clashes with Eigen.
#include "altplan/advisor.hpp"
#include "altplan/errors.hpp"
#include "altplan/harness.hpp"

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

namespace {

using nlohmann::json;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return json::parse(in);
}

void print_fields(const altplan::ConfigError& e) {
  for (const auto& f : e.fields()) std::cerr << "  " << f.name << ": " << f.message << '\n';
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential accelerated life test planning"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::optional<std::uint64_t> seed;
  auto* study = app.add_subcommand("study", "Run a synthetic PCS study and write CSV outputs");
  study->add_option("--config", config_path, "Study configuration (JSON)")->required()->check(CLI::ExistingFile);
  study->add_option("--out", out_dir, "Output directory")->required();
  study->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  study->add_option("--seed", seed, "Override the configured seed");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate-config", "Check a study configuration");
  validate->add_option("file", validate_path)->required()->check(CLI::ExistingFile);

  std::string data_dir;
  if (const char* env = std::getenv("ALT_PLANNER_DATA_DIR")) data_dir = env;
  int port = 8080;
  std::string host = "0.0.0.0";
  std::string ui_dir;
  auto* serve = app.add_subcommand("serve", "Run the experiment advisor HTTP service");
  auto* dd = serve->add_option("--data-dir", data_dir, "Session log directory (default $ALT_PLANNER_DATA_DIR)");
  if (data_dir.empty()) dd->required();
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve->add_option("--host", host);
  serve->add_option("--ui-dir", ui_dir, "Static files for the web client")->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*study) {
      auto config = altplan::StudyConfig::from_json(read_json(config_path));
      if (seed) config.seed = *seed;
      const auto result = altplan::run_study(config, threads);
      altplan::write_study_outputs(result, out_dir);
      for (const auto& m : result.methods) {
        std::cout << altplan::to_string(m.method.policy) << '/' << altplan::to_string(m.method.track)
                  << "  PCS_" << config.n_steps << " = " << m.pcs.back() << "  censored "
                  << m.censoring_rate() << '\n';
      }
      std::cout << "wrote " << out_dir << " in " << result.wall_seconds << " s\n";
      return 0;
    }
    if (*validate) {
      const auto config = altplan::StudyConfig::from_json(read_json(validate_path));
      std::cout << config.to_json().dump(2) << '\n';
      return 0;
    }
    if (*serve) {
      altplan::advisor::SessionStore store(data_dir);
      httplib::Server server;
      std::optional<std::filesystem::path> ui;
      if (!ui_dir.empty()) ui = ui_dir;
      altplan::advisor::install_routes(server, store, ui);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "serving " << store.size() << " session(s) from " << data_dir << " on " << host << ':'
                << port << std::endl;
      if (!server.listen(host, port)) {
        std::cerr << "cannot listen on " << host << ':' << port << '\n';
        return 1;
      }
      return 0;
    }
  } catch (const altplan::ConfigError& e) {
    std::cerr << "invalid configuration\n";
    print_fields(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
