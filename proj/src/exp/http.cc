// Copyright 2026 The bodyscene Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <cstdio>
#include <fstream>
#include <sstream>

#include "bodyscene/exp/expserver.h"
#include "httplib.h"

namespace bodyscene::exp {

using nlohmann::json;

struct ExperimentServer::Impl {
  Experiment& experiment;
  std::filesystem::path root;
  httplib::Server server;

  Impl(Experiment& e, std::filesystem::path r) : experiment(e), root(std::move(r)) {}

  void routes();
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

// Maps the exception types of Experiment onto status codes.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const NotFound& e) {
    send_error(res, 404, e.what());
  } catch (const Conflict& e) {
    send_error(res, 409, e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, std::string("malformed request: ") + e.what());
  } catch (const std::invalid_argument& e) {
    send_error(res, 400, e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

bool read_file(const std::filesystem::path& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

int parse_index(const std::string& text) {
  std::size_t used = 0;
  const int v = std::stoi(text, &used);
  if (used != text.size()) throw std::invalid_argument("bad index '" + text + "'");
  return v;
}

}  // namespace

void ExperimentServer::Impl::routes() {
  server.Post("/session", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      const std::string pid = experiment.create_session();
      json blocks = json::array();
      for (stim::Version v : kBlockOrder) blocks.push_back(stim::version_name(v));
      send_json(res, 201,
                {{"participant", pid},
                 {"total_trials", experiment.plan(pid).total_trials()},
                 {"blocks", blocks},
                 {"frame_rate", experiment.config().frame_rate}});
    });
  });

  server.Get("/trial/:pid", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string& pid = req.path_params.at("pid");
      const auto trial = experiment.next_trial(pid);
      if (!trial) {
        send_json(res, 200, {{"status", "done"}, {"participant", pid}});
      } else {
        send_json(res, 200, trial->to_json());
      }
    });
  });

  server.Post("/response/:pid", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string& pid = req.path_params.at("pid");
      const json body = json::parse(req.body);
      const int block = block_of(stim::parse_version(body.at("block").get<std::string>()));
      const TrialRecord r = experiment.record_response(pid, block, body.at("trial").get<int>(),
                                                       body.at("choice").get<int>());
      send_json(res, 200, r.to_json());
    });
  });

  server.Get("/results/:pid", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string& pid = req.path_params.at("pid");
      json j = experiment.participant_accuracy(pid).to_json();
      j["participant"] = pid;
      send_json(res, 200, j);
    });
  });

  server.Get("/clip/:version/:stimulus/:frame",
             [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const stim::Version version = stim::parse_version(req.path_params.at("version"));
      const auto clip_id = experiment.clip_for_stimulus(req.path_params.at("stimulus"));
      if (!clip_id) throw NotFound("unknown stimulus");
      if (req.has_param("pid")) {
        const int reached = experiment.current_block(req.get_param_value("pid"));
        if (block_of(version) > reached) {
          send_error(res, 403, "block not reached yet");
          return;
        }
      }
      const int frame = parse_index(req.path_params.at("frame"));
      const synth::ClipRecord& record = experiment.manifest().find(*clip_id);
      if (frame < 0 || frame >= record.frames) throw NotFound("frame out of range");
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%04d.ppm", frame);
      std::string bytes;
      if (!read_file(root / stim::version_name(version) / record.id / name, bytes)) {
        throw NotFound("frame file missing");
      }
      res.status = 200;
      res.set_content(std::move(bytes), "image/x-portable-pixmap");
    });
  });
}

ExperimentServer::ExperimentServer(Experiment& experiment, std::filesystem::path versioned_root)
    : impl_(std::make_unique<Impl>(experiment, std::move(versioned_root))) {
  impl_->server.set_tcp_nodelay(true);
  impl_->routes();
}

ExperimentServer::~ExperimentServer() { stop(); }

int ExperimentServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ExperimentServer::serve() { impl_->server.listen_after_bind(); }

void ExperimentServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace bodyscene::exp
