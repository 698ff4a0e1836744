// Library walk-through on the generated digit domains: train a source
// embedding, adapt a copy to the shifted domain, classify with kNN.
#include <cstdio>

#include "madda/madda.hpp"

using namespace madda;

int main(int argc, char** argv) {
  const std::size_t source_epochs = argc > 1 ? std::stoul(argv[1]) : 10;
  const std::size_t adapt_epochs = argc > 2 ? std::stoul(argv[2]) : 10;

  const auto thin = data::make_synthetic_digits(1000, data::synthetic_style("thin"), 1, "synthetic-thin");
  const auto bold = data::make_synthetic_digits(1000, data::synthetic_style("bold"), 2, "synthetic-bold");
  const auto bold_test =
      data::make_synthetic_digits(500, data::synthetic_style("bold"), 3, "synthetic-bold", data::Split::test);

  auto source = models::build_model(derive_seed(1, "model"));
  training::TrainSchedule ts;
  ts.epochs = source_epochs;
  training::SourceTrainer trainer(source, ts);
  for (std::size_t e = 0; e < ts.epochs; ++e) {
    const auto st = trainer.run_epoch(thin);
    std::printf("source epoch %2zu  triplet loss %.4f\n", e + 1, st.mean_triplet_loss);
  }

  const auto reference = inference::embed_dataset(source, thin);
  auto score = [&](const models::ModelBundle& m) {
    const auto pred = inference::knn_predict(inference::embed_dataset(m, bold_test), reference, 5);
    return inference::accuracy(pred, bold_test.labels);
  };

  auto target = models::init_target_from_source(source);
  auto disc = models::build_discriminator(derive_seed(1, "discriminator"));
  training::AdaptSchedule as;
  training::Adapter adapter(source, target, disc, thin, bold, as);
  std::printf("source only: %.3f\n", score(target));
  for (std::size_t e = 0; e < adapt_epochs; ++e) {
    const auto st = adapter.run_epoch();
    std::printf("adapt epoch %2zu  D %.3f  G %.3f  C %.3f  acc %.3f\n", e + 1, st.discriminator_loss,
                st.generator_loss, st.center_loss, score(target));
  }
}
