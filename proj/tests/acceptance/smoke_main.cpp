// Standalone smoke run with adjustable knobs, for exploring the smoke setup.
#include <cstdio>

#include "CLI11.hpp"
#include "fixtures.hpp"
#include "smoke.hpp"

int main(int argc, char** argv) {
  zigan::testing::SmokeOptions o;
  CLI::App app{"zigan smoke experiment"};
  app.add_option("--epochs", o.epochs);
  app.add_option("--width-divisor", o.width_divisor);
  app.add_option("--lr", o.lr);
  app.add_option("--seed", o.seed);
  app.add_option("--batch-size", o.batch_size);
  CLI11_PARSE(app, argc, argv);
  o.verbose = true;
  zigan::testing::TempDir tmp("smoke");
  o.workdir = tmp.path();
  const auto r = zigan::testing::run_smoke(o);
  std::printf("steps %d  loss %.4f -> %.4f (ratio %.3f)  iou %.4f -> %.4f (gain %.4f)  %.1f s\n", r.steps,
              r.initial_loss, r.final_loss, r.final_loss / r.initial_loss, r.untrained_iou, r.trained_iou,
              r.trained_iou - r.untrained_iou, r.seconds);
  return 0;
}
