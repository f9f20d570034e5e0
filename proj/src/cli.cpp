#include "pbm/cli.hpp"

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pbm/dsl.hpp"
#include "pbm/error.hpp"
#include "pbm/pdp.hpp"
#include "pbm/pep_sim.hpp"
#include "pbm/refiner.hpp"
#include "pbm/repo.hpp"
#include "pbm/service.hpp"

namespace pbm::cli {
namespace {

constexpr const char* kTsvHelp = R"(Machine-readable output (--format tsv): a header row, then one row per item.
  validate   goals  rules
  refine     strategy  count  leaves(comma-separated)
  compile    strategy  rules  output
  conflicts  severity  kind  rule_a  rule_b  src  dst  proto  port  ts
  simulate   steps  flows  denied  used_kbps
  translate  rule  line
  repo       version  created  checksum  file   (commit, log)
  pep run    steps  flows  denied  used_kbps

Exit codes: 0 success, 1 validation or conflict findings, 2 usage error,
3 I/O or protocol error.)";

volatile std::sig_atomic_t g_stop = 0;
extern "C" void on_signal(int) { g_stop = 1; }

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << text;
    if (!f) throw IoError("cannot write " + path);
}

// Errors raised while reading a named file keep the file name in front.
struct FileError : Error {
    FileError(const std::string& file, const ParseError& e) : Error(file + ":" + e.what()) {}
};

Document load_document(const std::string& path) {
    std::string text = read_text(path);
    try {
        return parse(text);
    } catch (const ParseError& e) {
        throw FileError(path, e);
    }
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (const auto& s : items) {
        if (!out.empty()) out += sep;
        out += s;
    }
    return out;
}

struct SimTotals {
    std::size_t steps = 0, flows = 0, denied = 0;
    std::int64_t used = 0;
};

SimTotals totals(const std::vector<AllocationReport>& reports) {
    SimTotals t;
    t.steps = reports.size();
    for (const auto& r : reports) {
        t.flows += r.flows.size();
        t.used += r.used_kbps;
        for (const auto& f : r.flows) t.denied += f.denied ? 1 : 0;
    }
    return t;
}

void print_totals(const SimTotals& t, bool tsv, std::ostream& out) {
    if (tsv) {
        out << "steps\tflows\tdenied\tused_kbps\n" << t.steps << "\t" << t.flows << "\t" << t.denied << "\t" << t.used << "\n";
    } else {
        out << t.steps << " steps, " << t.flows << " flows, " << t.denied << " denied, " << t.used << " kbps granted\n";
    }
}

void print_versions(const std::vector<RepoVersion>& versions, bool tsv, std::ostream& out) {
    if (tsv) out << "version\tcreated\tchecksum\tfile\n";
    for (const auto& v : versions) {
        if (tsv) out << v.version << "\t" << v.created << "\t" << v.checksum << "\t" << v.path << "\n";
        else out << "v" << v.version << "  created " << v.created << "  checksum " << v.checksum << "  " << v.path << "\n";
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"pbmctl: policy documents, refinement, conflicts, simulation and the PDP/PEP service"};
    app.name(args.empty() ? "pbmctl" : args[0]);
    app.footer(kTsvHelp);
    app.require_subcommand(1);
    app.fallthrough();
    app.failure_message(CLI::FailureMessage::help);

    std::string format = "text";
    app.add_option("--format", format, "Output format")->check(CLI::IsMember({"text", "tsv"}));

    std::string doc_path, root, strategy_id = "S1", output, trace_path, report_path, profile, repo_dir, listen, connect;
    std::int64_t capacity = 0, step = 1;
    int version = 0;

    auto* validate = app.add_subcommand("validate", "Parse and check a policy document");
    validate->add_option("doc", doc_path, "Policy document")->required();

    auto* refine = app.add_subcommand("refine", "List the strategies that achieve a goal");
    refine->add_option("doc", doc_path, "Policy document")->required();
    refine->add_option("--root", root, "Goal to refine")->required();

    auto* compile = app.add_subcommand("compile", "Compile one strategy into rules");
    compile->add_option("doc", doc_path, "Policy document")->required();
    compile->add_option("--root", root, "Goal to refine")->required();
    compile->add_option("--strategy", strategy_id, "Strategy id, e.g. S1")->capture_default_str();
    compile->add_option("-o,--output", output, "Output document (default stdout)");

    auto* conflicts = app.add_subcommand("conflicts", "Report overlapping rules with contradictory actions");
    conflicts->add_option("doc", doc_path, "Policy document")->required();

    auto* simulate = app.add_subcommand("simulate", "Replay a traffic trace against the document's rules");
    simulate->add_option("doc", doc_path, "Policy document")->required();
    simulate->add_option("--trace", trace_path, "Trace CSV")->required();
    simulate->add_option("--capacity", capacity, "Link capacity in kbps")->required()->check(CLI::NonNegativeNumber);
    simulate->add_option("--step", step, "Timestep in seconds")->capture_default_str()->check(CLI::PositiveNumber);
    simulate->add_option("--report", report_path, "Report CSV (default stdout)");

    auto* translate = app.add_subcommand("translate", "Render rules as device configuration lines");
    translate->add_option("doc", doc_path, "Policy document")->required();
    translate->add_option("--profile", profile, "Device profile: shaper, policer or firewall")->required();
    translate->add_option("-o,--output", output, "Output file (default stdout)");

    auto* repo = app.add_subcommand("repo", "Versioned policy repository");
    repo->require_subcommand(1);
    auto* repo_commit_cmd = repo->add_subcommand("commit", "Store a document as a new version");
    repo_commit_cmd->add_option("doc", doc_path, "Policy document")->required();
    auto* repo_log = repo->add_subcommand("log", "List versions");
    auto* repo_show = repo->add_subcommand("show", "Print a stored version (latest by default)");
    repo_show->add_option("--version", version, "Version number");
    for (auto* sub : {repo_commit_cmd, repo_log, repo_show}) {
        sub->add_option("--repo", repo_dir, "Repository directory")->required();
    }

    auto* pdp = app.add_subcommand("pdp", "Policy decision point");
    pdp->require_subcommand(1);
    auto* serve = pdp->add_subcommand("serve", "Serve decisions from the newest repository version");
    serve->add_option("--listen", listen, "host:port")->required();
    serve->add_option("--repo", repo_dir, "Repository directory")->required();

    auto* pep = app.add_subcommand("pep", "Policy enforcement point");
    pep->require_subcommand(1);
    auto* pep_run = pep->add_subcommand("run", "Replay a trace with decisions from a remote PDP");
    pep_run->add_option("--connect", connect, "host:port")->required();
    pep_run->add_option("--trace", trace_path, "Trace CSV")->required();
    pep_run->add_option("--capacity", capacity, "Link capacity in kbps")->required()->check(CLI::NonNegativeNumber);
    pep_run->add_option("--step", step, "Timestep in seconds")->capture_default_str()->check(CLI::PositiveNumber);
    pep_run->add_option("--report", report_path, "Report CSV (default stdout)");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("pbmctl");
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }
    const bool tsv = format == "tsv";

    try {
        if (*validate) {
            Document doc = load_document(doc_path);
            if (tsv) out << "goals\trules\n" << doc.graph.goals.size() << "\t" << doc.rules.size() << "\n";
            else out << doc.graph.goals.size() << " goals, " << doc.rules.size() << " rules\n";
            return kOk;
        }
        if (*refine) {
            Document doc = load_document(doc_path);
            auto strategies = enumerate_strategies(doc.graph, root);
            if (tsv) out << "strategy\tcount\tleaves\n";
            for (const auto& s : strategies) {
                if (tsv) out << s.id << "\t" << s.leaves.size() << "\t" << join(s.leaves, ",") << "\n";
                else out << s.id << ": " << join(s.leaves, " ") << " (" << s.leaves.size() << " leaves)\n";
            }
            return kOk;
        }
        if (*compile) {
            Document doc = load_document(doc_path);
            auto strategies = enumerate_strategies(doc.graph, root);
            auto it = std::find_if(strategies.begin(), strategies.end(), [&](const Strategy& s) { return s.id == strategy_id; });
            if (it == strategies.end()) {
                err << "no strategy " << strategy_id << " for " << root << " (" << strategies.size() << " available)\n";
                return kFindings;
            }
            Document compiled = compile_document(doc, *it);
            write_text(output, serialize(compiled), out);
            if (!output.empty() && output != "-") {
                if (tsv) out << "strategy\trules\toutput\n" << it->id << "\t" << compiled.rules.size() << "\t" << output << "\n";
                else out << "compiled " << compiled.rules.size() << " rules from " << it->id << " into " << output << "\n";
            }
            return kOk;
        }
        if (*conflicts) {
            Document doc = load_document(doc_path);
            auto found = detect_conflicts(doc.rules, doc.catalogs);
            std::size_t errors = 0;
            if (tsv) out << "severity\tkind\trule_a\trule_b\tsrc\tdst\tproto\tport\tts\n";
            for (const auto& c : found) {
                const char* severity = is_warning(c.kind) ? "warning" : "error";
                errors += is_warning(c.kind) ? 0 : 1;
                const auto& w = c.witness;
                if (tsv) {
                    out << severity << "\t" << to_string(c.kind) << "\t" << c.rule_a << "\t" << c.rule_b << "\t"
                        << to_string(w.src) << "\t" << to_string(w.dst) << "\t" << to_string(w.protocol) << "\t" << w.port
                        << "\t" << w.timestamp << "\n";
                } else {
                    out << severity << ": " << to_string(c.kind) << " " << c.rule_a << " " << c.rule_b << " witness src="
                        << to_string(w.src) << " dst=" << to_string(w.dst) << " proto=" << to_string(w.protocol)
                        << " port=" << w.port << " ts=" << w.timestamp << "\n";
                }
            }
            if (!tsv) {
                out << found.size() << " conflicts (" << errors << " errors, " << found.size() - errors << " warnings)\n";
            }
            return errors > 0 ? kFindings : kOk;
        }
        if (*simulate) {
            Document doc = load_document(doc_path);
            std::vector<FlowDescriptor> trace;
            try {
                trace = parse_trace(read_text(trace_path));
            } catch (const ParseError& e) {
                throw FileError(trace_path, e);
            }
            auto reports = replay(doc.rules, doc.catalogs, trace, capacity, step);
            write_text(report_path, format_report(reports), out);
            if (!report_path.empty() && report_path != "-") print_totals(totals(reports), tsv, out);
            return kOk;
        }
        if (*translate) {
            Document doc = load_document(doc_path);
            DeviceProfile dev = find_profile(profile);
            std::string text;
            std::ostringstream table;
            if (tsv) table << "rule\tline\n";
            for (const auto& rule : doc.rules) {
                for (const auto& line : translate_to_device(rule, doc.catalogs, dev)) {
                    text += line + "\n";
                    if (tsv) table << rule.id << "\t" << line << "\n";
                }
            }
            bool to_file = !output.empty() && output != "-";
            if (tsv && !to_file) {
                out << table.str();
            } else {
                write_text(output, text, out);
                if (tsv) out << table.str();
            }
            return kOk;
        }
        if (*repo_commit_cmd) {
            Document doc = load_document(doc_path);
            auto v = Repository(repo_dir).commit(doc);
            print_versions({v}, tsv, out);
            return kOk;
        }
        if (*repo_log) {
            print_versions(Repository(repo_dir).log(), tsv, out);
            return kOk;
        }
        if (*repo_show) {
            Repository r(repo_dir);
            int v = version;
            if (v == 0) {
                auto latest = r.latest();
                if (!latest) {
                    err << "repository " << repo_dir << " has no versions\n";
                    return kFindings;
                }
                v = latest->version;
            }
            out << r.load_text(v);
            return kOk;
        }
        if (*serve) {
            PdpServer server({listen, repo_dir, std::chrono::milliseconds(250)});
            server.start();
            out << "pdp listening on port " << server.port() << ", serving version " << server.version() << std::endl;
            g_stop = 0;
            auto old_int = std::signal(SIGINT, on_signal);
            auto old_term = std::signal(SIGTERM, on_signal);
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            server.stop();
            std::signal(SIGINT, old_int);
            std::signal(SIGTERM, old_term);
            return kOk;
        }
        if (*pep_run) {
            std::vector<FlowDescriptor> trace;
            try {
                trace = parse_trace(read_text(trace_path));
            } catch (const ParseError& e) {
                throw FileError(trace_path, e);
            }
            PepClient client = PepClient::connect(connect);
            // replay() ranks by the vector it was handed; keep it in step
            // with whatever document the PDP last pushed.
            auto rules = client.document().rules;
            auto reports = replay(rules, trace, capacity, step, [&](const FlowDescriptor& f) {
                Decision d = client.request(f);
                if (client.document().rules != rules) rules = client.document().rules;
                return d;
            });
            for (const auto& r : reports) client.report(r);
            client.close();
            write_text(report_path, format_report(reports), out);
            if (!report_path.empty() && report_path != "-") print_totals(totals(reports), tsv, out);
            return kOk;
        }
    } catch (const IoError& e) {
        err << "pbmctl: " << e.what() << "\n";
        return kIoError;
    } catch (const ProtocolError& e) {
        err << "pbmctl: protocol error: " << e.what() << "\n";
        return kIoError;
    } catch (const RepoError& e) {
        err << "pbmctl: repository: " << e.what() << "\n";
        return kIoError;
    } catch (const Error& e) {
        err << "pbmctl: " << e.what() << "\n";
        return kFindings;
    }
    err << app.help();
    return kUsage;
}

}  // namespace pbm::cli
