#include <CLI11.hpp>

#include "taulab/suites.hpp"

int main(int argc, char** argv) {
    CLI::App app{"taulab: exact discrete-time laboratory for optimal stopping and linear RBSDEs "
                 "under a random horizon"};
    app.require_subcommand(1);

    std::string run_file, run_out = "out", backend;
    int jobs = 1;
    auto* run = app.add_subcommand("run", "run a scenario file and write report + tables");
    run->add_option("file", run_file, "scenario JSON file")->required();
    run->add_option("--out", run_out, "output directory");
    run->add_option("--backend", backend, "rational|float (overrides the scenario)")
        ->check(CLI::IsMember({"rational", "float"}));
    run->add_option("--jobs", jobs, "parallel workers");

    std::string cal_file, cal_out;
    auto* cal = app.add_subcommand("calibrate", "run a calibration corpus and write the ledger");
    cal->add_option("file", cal_file, "corpus spec JSON file")->required();
    cal->add_option("--out", cal_out, "ledger output path")->required();
    cal->add_option("--jobs", jobs, "parallel workers");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return taulab::run_scenario_file(run_file, run_out, backend, jobs);
    return taulab::calibrate_file(cal_file, cal_out, jobs);
}
