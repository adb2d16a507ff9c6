#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptgate/calibration.hpp"
#include "promptgate/corpus.hpp"
#include "promptgate/ensemble.hpp"
#include "promptgate/forest.hpp"

namespace promptgate {

enum class FailurePolicy { fail_open, fail_closed };

struct MemberDescriptor {
  std::string id;
  std::string dataset_tag;
  nlohmann::json backend;
};

struct GatewayConfig {
  std::string listen = "127.0.0.1:8080";
  std::vector<MemberDescriptor> members;
  std::size_t selection_size = 1;
  Strategy strategy = Strategy::router();
  double threshold = 0.5;
  FeatureSet feature_set;
  std::string forest_path;  // empty: train from calibration_path at startup
  std::uint64_t seed = 0;
  std::chrono::milliseconds backend_timeout{2000};
  FailurePolicy failure_policy = FailurePolicy::fail_closed;
  std::size_t max_concurrent_backend_calls = 8;
  ForestConfig forest;
  // Corpus files whose prompts stub backends can recognise.
  std::vector<std::string> corpus_files;
  // Initial cumulative calibration / test sets (corpus format, dataset field kept).
  std::string calibration_path;
  std::string test_path;
  std::uint64_t partition_seed = 0;
  bool audit_log = false;

  // Relative paths are resolved against `base_dir`. Throws InvalidArgument.
  static GatewayConfig from_json(const nlohmann::json& doc, const std::string& base_dir = ".");
  static GatewayConfig load(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;
};

struct ClassifyRequest {
  std::string prompt;
  std::optional<std::size_t> n;
  std::optional<Strategy> strategy;
  std::optional<std::uint64_t> request_seed;
};

struct ClassifyResponse {
  Verdict verdict;
  bool degraded = false;
  std::string error;  // backend failure behind a degraded verdict
  std::uint64_t state_version = 0;
  std::size_t k = 0;

  nlohmann::json to_json() const;
};

struct UpdateRequest {
  std::string dataset_path;
  std::string dataset_tag;
  nlohmann::json backend;
  std::string member_id;  // defaults to "cop-<tag>"
};

struct UpdateResponse {
  std::size_t k = 0;
  double threshold = 0.0;
  double router_accuracy = 0.0;
  CalibrationReport report;
  std::uint64_t state_version = 0;

  nlohmann::json to_json() const;
};

// Everything a request needs, installed and replaced as one unit.
struct GatewaySnapshot {
  EnsembleState ensemble;
  GlobalSets globals;
  std::shared_ptr<const CorpusIndex> corpus;
  std::uint64_t version = 0;
};

// Transport-independent gateway. Requests read an immutable snapshot; admin
// operations build a new snapshot off to the side and swap it in.
class GatewayService {
 public:
  explicit GatewayService(GatewayConfig config);

  // Backend failures resolve through the failure policy into a degraded
  // verdict. Throws InvalidArgument for bad requests (e.g. n > k).
  ClassifyResponse classify(const ClassifyRequest& request) const;

  // ingest -> partition -> update globals -> add member -> retrain router ->
  // recalibrate threshold -> install. On any error the old state stays.
  UpdateResponse handle_update(const UpdateRequest& request);
  UpdateResponse recalibrate();

  nlohmann::json health() const;
  nlohmann::json state() const;

  std::shared_ptr<const GatewaySnapshot> snapshot() const;
  const GatewayConfig& config() const noexcept { return config_; }

 private:
  void install(std::shared_ptr<const GatewaySnapshot> next);
  BackendContext backend_context(std::shared_ptr<const CorpusIndex> corpus) const;
  RecalibrationOptions recalibration_options() const;

  GatewayConfig config_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const GatewaySnapshot> snapshot_;
  std::mutex admin_mutex_;
};

// HTTP front end over a GatewayService:
//   POST /v1/classify, POST /v1/update, POST /v1/recalibrate,
//   GET /v1/health, GET /v1/state.
// The request seed may be supplied in the X-Request-Seed header.
class HttpGateway {
 public:
  explicit HttpGateway(GatewayService& service);
  ~HttpGateway();
  HttpGateway(const HttpGateway&) = delete;
  HttpGateway& operator=(const HttpGateway&) = delete;

  // Binds to host:port (port 0 picks a free port) and returns the port.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

inline constexpr const char* kRequestSeedHeader = "X-Request-Seed";

}  // namespace promptgate
