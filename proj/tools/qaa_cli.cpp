// Command-line front end. Subcommands:
//   gen      generate problem instances (optionally USA / filtered)
//   ed       exact spectra and gaps over an s grid
//   sse      stochastic series expansion run
//   psse     projection (free-boundary) SSE run
//   gapfit   correlation series -> gap estimates
//   scaling  gap-vs-N scaling fits
//   cavity   cavity population dynamics
//   run      experiment orchestration from a config file
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "qaa/exactdiag.hpp"
#include "qaa/instances.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw qaa::io_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path);
    if (!out) throw qaa::io_error("cannot write " + path);
    out << text;
}

std::vector<double> parse_grid(const std::string& spec) {
    // "a:b:step" or comma-separated values
    std::vector<double> out;
    if (spec.find(':') != std::string::npos) {
        double a, b, step;
        if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &a, &b, &step) != 3 || step <= 0)
            throw qaa::config_error("bad grid spec '" + spec + "'");
        for (double s = a; s <= b + 1e-12; s += step) out.push_back(s);
    } else {
        std::stringstream ss(spec);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    }
    return out;
}

int cmd_gen(const std::string& problem, int n, std::uint64_t seed, bool usa, bool filtered,
            long max_tries, const std::string& out_path) {
    std::string text;
    if (problem == "xorsat") {
        qaa::XorsatInstance inst;
        if (usa) {
            long t = 0;
            for (;; ++t) {
                if (t >= max_tries) throw qaa::generation_error("gen: no USA instance found");
                inst = qaa::generate_xorsat(n, qaa::derive_seed(seed, 0x05a, t));
                if (qaa::has_unique_satisfying_assignment(inst)) break;
            }
        } else {
            inst = qaa::generate_xorsat(n, seed);
        }
        text = qaa::serialize(inst);
    } else if (problem == "maxcut") {
        if (filtered) {
            auto f = qaa::filter_maxcut_ensemble(n, seed, max_tries);
            std::cerr << "# filtered: sampled=" << f.report.sampled << " accepted=" << f.report.accepted
                      << " E0=" << f.solution.energy << " degeneracy=" << f.solution.degeneracy << "\n";
            text = qaa::serialize(f.instance);
        } else {
            text = qaa::serialize(qaa::generate_maxcut(n, seed));
        }
    } else {
        throw qaa::config_error("gen: unknown problem '" + problem + "'");
    }
    text += "# seed " + std::to_string(seed) + "\n";
    write_file(out_path, text);
    return 0;
}

int cmd_ed(const std::string& inst_path, const std::string& grid_spec, const std::string& sector_name,
           int k, const std::string& out_path) {
    auto parsed = qaa::parse_instance(read_file(inst_path));
    auto sys = parsed.to_clause_system();
    qaa::Sector sector = qaa::Sector::full;
    if (sector_name == "even") sector = qaa::Sector::even;
    else if (sector_name == "odd") sector = qaa::Sector::odd;
    else if (sector_name != "full") throw qaa::config_error("ed: bad sector '" + sector_name + "'");
    auto grid = parse_grid(grid_spec);
    std::ostringstream csv;
    csv << "s";
    for (int i = 0; i < k; ++i) csv << ",E" << i;
    csv << ",gap,sector\n";
    for (double s : grid) {
        auto h = qaa::build_hamiltonian<double>(sys, s, sector);
        auto spec = qaa::lowest_eigenvalues<double>(h, k, 1e-10);
        csv << s;
        for (int i = 0; i < k; ++i) csv << ',' << spec.eigenvalues[i];
        csv << ',' << spec.gap() << ',' << qaa::sector_name(sector) << '\n';
    }
    write_file(out_path, csv.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantum adiabatic toolkit: instances, spectra, SSE, cavity"};
    app.require_subcommand(1);

    // gen
    std::string gen_problem, gen_out;
    int gen_n = 16;
    std::uint64_t gen_seed = 1;
    bool gen_usa = false, gen_filtered = false;
    long gen_tries = 100000;
    auto* gen = app.add_subcommand("gen", "generate a problem instance");
    gen->add_option("--problem", gen_problem, "xorsat|maxcut")->required();
    gen->add_option("--n", gen_n, "number of bits / vertices")->required();
    gen->add_option("--seed", gen_seed, "RNG seed")->required();
    gen->add_flag("--usa", gen_usa, "require a unique satisfying assignment (xorsat)");
    gen->add_flag("--filtered", gen_filtered, "filtered ensemble (maxcut)");
    gen->add_option("--max-tries", gen_tries, "sampling budget");
    gen->add_option("--out", gen_out, "output file")->required();

    // ed
    std::string ed_inst, ed_grid = "0:1:0.05", ed_sector = "full", ed_out;
    int ed_k = 4;
    auto* ed = app.add_subcommand("ed", "exact spectra over an s grid");
    ed->add_option("--inst", ed_inst, "instance file")->required();
    ed->add_option("--s-grid", ed_grid, "a:b:step or comma list");
    ed->add_option("--sector", ed_sector, "full|even|odd");
    ed->add_option("--k", ed_k, "number of eigenvalues");
    ed->add_option("--out", ed_out, "output CSV")->required();

    try {
        app.parse(argc, argv);
        if (gen->parsed())
            return cmd_gen(gen_problem, gen_n, gen_seed, gen_usa, gen_filtered, gen_tries, gen_out);
        if (ed->parsed()) return cmd_ed(ed_inst, ed_grid, ed_sector, ed_k, ed_out);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const qaa::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
