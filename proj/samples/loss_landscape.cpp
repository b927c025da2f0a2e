// Prints the three losses and their gradient scales along the [C, -C, ..., -C]
// row, then one batch loss from random embeddings.

#include <cstdio>
#include <random>

#include "tfcl/losses.hpp"
#include "tfcl/scenario.hpp"

int main() {
  using namespace tfcl;
  const TemperatureParam variants[] = {TemperatureParam::fixed(0.1), TemperatureParam::fixed(1.0),
                                       TemperatureParam::learnable(0.0),
                                       TemperatureParam::temperature_free()};
  std::printf("%-10s %6s %5s %12s %12s\n", "variant", "param", "C", "loss", "grad_scale");
  for (const auto& v : variants) {
    for (double c : {0.1, 0.5, 0.9, 0.999}) {
      const ScenarioPoint p{c, 2, v};
      const double param = v.kind == TemperatureKind::FixedTau ? v.tau : v.t;
      std::printf("%-10s %6.2f %5.3f %12.6g %12.6g\n", scenario_variant_name(v.kind).c_str(),
                  param, c, scenario_loss(p), scenario_grad_scale(p));
    }
  }

  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix a(8, 16), b(8, 16);
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    a.data()[k] = g(rng);
    b.data()[k] = a.data()[k] + 0.3 * g(rng);
  }
  const SimilarityMatrix s = cosine_similarity_matrix(EmbeddingBatch(a), EmbeddingBatch(b));
  std::printf("\nbatch of 8 noisy pairs: ntxent(tau=0.1)=%.6f temp-free=%.6f\n",
              ntxent_loss(s, 0.1).loss, tf_infonce_loss(s).loss);
}
