#include <nlohmann/json.hpp>

#include "acceptance/criteria.hpp"
#include "support/corpus.hpp"

namespace acceptance {

void criterion_parser_corpus(Verdict& v) {
  const auto outcomes = haf::testing::run_parser_corpus();
  std::size_t passed = 0;
  for (const auto& o : outcomes) {
    if (o.failures.empty()) {
      ++passed;
    } else {
      v.require(false, o.name + ": " + o.failures.front());
    }
  }
  v.require(outcomes.size() >= kMinCorpus, "corpus size");

  // The four sample model outputs must be in the corpus.
  const auto doc = nlohmann::json::parse(haf::testing::slurp(haf::testing::fixture("parser/corpus.json")));
  std::size_t samples = 0;
  for (const auto& item : doc) samples += item.value("model_sample", false) ? 1 : 0;
  v.require(samples == 4, "four sample model outputs present");
  v.detail << passed << "/" << outcomes.size() << " fixtures, " << samples << " model samples, ";
}

}  // namespace acceptance
