// Compile-coverage TU: pulls in every public header.
#include <tolerantecg/cfr.hpp>
#include <tolerantecg/checkpoint.hpp>
#include <tolerantecg/corruption.hpp>
#include <tolerantecg/error.hpp>
#include <tolerantecg/evalkit.hpp>
#include <tolerantecg/filter.hpp>
#include <tolerantecg/losses.hpp>
#include <tolerantecg/metrics.hpp>
#include <tolerantecg/nn/encoder.hpp>
#include <tolerantecg/nn/heads.hpp>
#include <tolerantecg/nn/layers.hpp>
#include <tolerantecg/nn/optim.hpp>
#include <tolerantecg/nn/param.hpp>
#include <tolerantecg/resample.hpp>
#include <tolerantecg/rng.hpp>
#include <tolerantecg/signal.hpp>
#include <tolerantecg/synthetic.hpp>
#include <tolerantecg/trainer.hpp>

int main() { return 0; }
