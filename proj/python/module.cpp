#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pbm/dsl.hpp"
#include "pbm/error.hpp"
#include "pbm/pdp.hpp"
#include "pbm/pep_sim.hpp"
#include "pbm/refiner.hpp"
#include "pbm/repo.hpp"
#include "pbm/wire.hpp"

namespace py = pybind11;
using namespace pbm;

namespace {

py::object opt(const std::optional<std::int64_t>& v) {
    if (!v) return py::none();
    return py::int_(*v);
}

py::dict decision_dict(const Decision& d) {
    py::dict out;
    out["matched"] = d.matched;
    out["admission"] = d.admission == Admission::Deny ? "deny" : "allow";
    out["min_kbps"] = opt(d.effective_min_kbps);
    out["max_kbps"] = opt(d.effective_max_kbps);
    out["priority"] = d.priority;
    py::list flags;
    for (auto f : d.flags) flags.append(std::string(to_string(f)));
    out["flags"] = flags;
    return out;
}

FlowDescriptor make_flow(const std::string& src, const std::string& dst, const std::string& proto, int port,
                         std::int64_t ts, std::int64_t demand) {
    FlowDescriptor f;
    auto s = parse_ipv4(src);
    auto d = parse_ipv4(dst);
    if (!s || !d) throw ValidationError("bad IPv4 address");
    if (proto != "tcp" && proto != "udp") throw ValidationError("protocol must be tcp or udp");
    if (port < 0 || port > 65535) throw ValidationError("port out of range");
    f.src = *s;
    f.dst = *d;
    f.protocol = proto == "tcp" ? Protocol::Tcp : Protocol::Udp;
    f.port = static_cast<std::uint16_t>(port);
    f.timestamp = ts;
    f.demand_kbps = demand;
    return f;
}

py::dict version_dict(const RepoVersion& v) {
    py::dict out;
    out["version"] = v.version;
    out["created"] = v.created;
    out["checksum"] = v.checksum;
    out["path"] = v.path;
    return out;
}

}  // namespace

PYBIND11_MODULE(_pbm, m) {
    m.doc() = "Policy documents, goal refinement, decisions, allocation and the policy repository";

    auto base = py::register_exception<Error>(m, "PbmError", PyExc_RuntimeError);
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<StrategyLimitError>(m, "StrategyLimitError", base.ptr());
    py::register_exception<RepoError>(m, "RepoError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());

    py::class_<Document>(m, "Document")
        .def_static("parse", &parse, py::arg("text"))
        .def("serialize", &serialize)
        .def_property_readonly("goals", [](const Document& d) {
            std::vector<std::string> ids;
            for (const auto& [id, g] : d.graph.goals) ids.push_back(id);
            return ids;
        })
        .def_property_readonly("rules", [](const Document& d) {
            std::vector<std::string> ids;
            for (const auto& r : d.rules) ids.push_back(r.id);
            return ids;
        })
        .def_property_readonly("utc_offset_minutes", [](const Document& d) { return d.catalogs.utc_offset_minutes; })
        .def("__eq__", [](const Document& a, const Document& b) { return a == b; })
        .def("__repr__", [](const Document& d) {
            return "<Document " + std::to_string(d.graph.goals.size()) + " goals, " + std::to_string(d.rules.size()) +
                   " rules>";
        });

    m.def("parse", &parse, py::arg("text"));
    m.def("serialize", &serialize, py::arg("doc"));

    m.def(
        "enumerate_strategies",
        [](const Document& d, const std::string& root, std::size_t cap) {
            std::vector<std::pair<std::string, std::vector<std::string>>> out;
            for (auto& s : enumerate_strategies(d.graph, root, cap)) out.emplace_back(s.id, s.leaves);
            return out;
        },
        py::arg("doc"), py::arg("root"), py::arg("cap") = kDefaultStrategyCap,
        "List of (strategy id, leaf ids).");

    m.def(
        "compile",
        [](const Document& d, const std::string& root, const std::string& strategy) {
            for (const auto& s : enumerate_strategies(d.graph, root)) {
                if (s.id == strategy) return compile_document(d, s);
            }
            throw ValidationError("no strategy " + strategy + " for " + root);
        },
        py::arg("doc"), py::arg("root"), py::arg("strategy") = "S1");

    m.def(
        "decide",
        [](const Document& d, const std::string& src, const std::string& dst, const std::string& proto, int port,
           std::int64_t ts, std::int64_t demand) {
            return decision_dict(decide(d.rules, make_flow(src, dst, proto, port, ts, demand), d.catalogs));
        },
        py::arg("doc"), py::arg("src"), py::arg("dst"), py::arg("proto"), py::arg("port"), py::arg("ts"),
        py::arg("demand_kbps") = 1);

    m.def(
        "detect_conflicts",
        [](const Document& d) {
            py::list out;
            for (const auto& c : detect_conflicts(d.rules, d.catalogs)) {
                py::dict row;
                row["rule_a"] = c.rule_a;
                row["rule_b"] = c.rule_b;
                row["kind"] = std::string(to_string(c.kind));
                row["warning"] = is_warning(c.kind);
                row["src"] = to_string(c.witness.src);
                row["dst"] = to_string(c.witness.dst);
                row["proto"] = std::string(to_string(c.witness.protocol));
                row["port"] = c.witness.port;
                row["ts"] = c.witness.timestamp;
                out.append(row);
            }
            return out;
        },
        py::arg("doc"));

    m.def(
        "translate",
        [](const Document& d, const std::string& profile) {
            auto dev = find_profile(profile);
            std::vector<std::string> lines;
            for (const auto& r : d.rules) {
                for (auto& l : translate_to_device(r, d.catalogs, dev)) lines.push_back(std::move(l));
            }
            return lines;
        },
        py::arg("doc"), py::arg("profile"));

    m.def(
        "allocate",
        [](const std::vector<py::dict>& flows, std::int64_t capacity) {
            std::vector<FlowRequest> reqs;
            for (const auto& f : flows) {
                FlowRequest r;
                r.demand_kbps = f["demand_kbps"].cast<std::int64_t>();
                if (f.contains("min_kbps") && !f["min_kbps"].is_none()) r.decision.effective_min_kbps = f["min_kbps"].cast<std::int64_t>();
                if (f.contains("max_kbps") && !f["max_kbps"].is_none()) r.decision.effective_max_kbps = f["max_kbps"].cast<std::int64_t>();
                if (f.contains("priority")) r.decision.priority = f["priority"].cast<int>();
                if (f.contains("denied") && f["denied"].cast<bool>()) r.decision.admission = Admission::Deny;
                reqs.push_back(std::move(r));
            }
            return allocate(reqs, capacity);
        },
        py::arg("flows"), py::arg("capacity_kbps"),
        "flows: dicts with demand_kbps and optional min_kbps, max_kbps, priority, denied.");

    m.def(
        "simulate",
        [](const Document& d, const std::string& trace_csv, std::int64_t capacity, std::int64_t step) {
            auto trace = parse_trace(trace_csv);
            return format_report(replay(d.rules, d.catalogs, trace, capacity, step));
        },
        py::arg("doc"), py::arg("trace_csv"), py::arg("capacity_kbps"), py::arg("step_seconds") = 1,
        "Returns the report CSV.");

    m.def(
        "priority_band", [](int p) { return std::string(to_string(priority_band(p))); }, py::arg("priority"));

    m.def(
        "encode",
        [](int kind, const py::bytes& payload) {
            auto k = message_kind(static_cast<std::uint8_t>(kind));
            if (!k || kind < 0 || kind > 255) throw ProtocolError(ProtocolError::Kind::UnknownKind, "unknown message kind");
            return py::bytes(encode(Message{*k, std::string(payload)}));
        },
        py::arg("kind"), py::arg("payload"));
    m.def(
        "decode",
        [](const py::bytes& frame) {
            Message msg = decode(std::string(frame));
            return py::make_tuple(static_cast<int>(msg.kind), py::bytes(msg.payload));
        },
        py::arg("frame"));
    m.def("fnv1a64_hex", [](const py::bytes& b) { return fnv1a64_hex(std::string(b)); }, py::arg("data"));

    py::class_<Repository>(m, "Repository")
        .def(py::init([](const std::filesystem::path& dir) { return Repository(dir); }), py::arg("dir"))
        .def("commit", [](Repository& r, const Document& d) { return version_dict(r.commit(d)); })
        .def("load", &Repository::load, py::arg("version"))
        .def("log", [](const Repository& r) {
            py::list out;
            for (const auto& v : r.log()) out.append(version_dict(v));
            return out;
        });
}
