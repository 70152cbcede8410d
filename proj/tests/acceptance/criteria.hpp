#pragma once

#include <chrono>
#include <sstream>
#include <string>

namespace acceptance {

// Pinned tolerances and budgets.
inline constexpr double kOracleTolerance = 1e-12;
inline constexpr double kFixtureTolerance = 1e-9;
inline constexpr double kOracleBudgetS = 5.0;
inline constexpr double kFuzzBudgetS = 60.0;
inline constexpr double kMockRunBudgetS = 30.0;
inline constexpr int kOracleTrials = 25;
inline constexpr int kFuzzInputs = 10000;
inline constexpr std::size_t kMinCorpus = 20;
inline constexpr std::size_t kMinMockSamples = 6;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void criterion_oracle(Verdict& v);
void criterion_fixtures(Verdict& v);
void criterion_fuzz(Verdict& v);
void criterion_parser_corpus(Verdict& v);
void criterion_mock_run(Verdict& v);
void criterion_ingestion(Verdict& v);
void criterion_rescore(Verdict& v);
void criterion_provider_compare(Verdict& v);

/// Returns 0 on success, 1 on failure, 77 when the live endpoint is not configured.
int live_smoke();

}  // namespace acceptance
