//! Verilog-like structural text. One module per tile holding that tile's
//! primitive instances, and a `top` module wiring the tiles together.
//! Output is deterministic so emit, parse, emit is a fixpoint.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use super::config::{ConfigField, FieldMeaning};
use super::{Endpoint, Instance, MuxRole, Primitive, RtlError, StructNetlist, Wire};

const HEADER: &str = "// structural netlist\n";

fn tile_module(tile: (u32, u32)) -> String {
    format!("tile_x{}_y{}", tile.0, tile.1)
}

fn range(width: u32) -> String {
    if width == 1 {
        String::new()
    } else {
        format!("[{}:0] ", width - 1)
    }
}

/// Natural pin order: alphabetic prefix, then numeric suffix.
fn pin_key(pin: &str) -> (String, u64, String) {
    let split = pin.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    let num = pin[split..].parse().unwrap_or(0);
    (pin[..split].to_string(), num, pin.to_string())
}

fn params(inst: &Instance, cfg: &HashMap<&str, &ConfigField>) -> Vec<(&'static str, String)> {
    let q = |s: &str| format!("\"{s}\"");
    match &inst.prim {
        Primitive::Mux { inputs, width, role } => {
            vec![("K", inputs.to_string()), ("W", width.to_string()), ("ROLE", q(role.name()))]
        }
        Primitive::Reg { width } => vec![("W", width.to_string())],
        Primitive::FifoReg { width, depth } => vec![("W", width.to_string()), ("DEPTH", depth.to_string())],
        Primitive::CfgReg { bits } => {
            let mut p = vec![("BITS", bits.to_string())];
            if let Some(f) = cfg.get(inst.name.as_str()) {
                p.extend([
                    ("X", f.tile.0.to_string()),
                    ("Y", f.tile.1.to_string()),
                    ("FEATURE", f.feature_id.to_string()),
                    ("REG", f.reg_index.to_string()),
                    ("OFFSET", f.bit_offset.to_string()),
                    ("MEANING", q(f.meaning.name())),
                ]);
            }
            p
        }
        Primitive::Core { name } => vec![("NAME", q(name))],
        Primitive::Const { width, value } => vec![("W", width.to_string()), ("VALUE", value.to_string())],
        Primitive::Join { sel_index } => {
            let sel: Vec<String> = sel_index.iter().map(|s| s.map_or("-".to_string(), |v| v.to_string())).collect();
            vec![("N", sel_index.len().to_string()), ("SEL", q(&sel.join(",")))]
        }
    }
}

pub fn emit_rtl(netlist: &StructNetlist) -> String {
    let n = netlist.clone().normalized();
    let tile_of: HashMap<&str, (u32, u32)> = n.instances.iter().map(|i| (i.name.as_str(), i.tile)).collect();
    let cfg: HashMap<&str, &ConfigField> = n.config_map.iter().map(|f| (f.name.as_str(), f)).collect();

    let mut conns: HashMap<&str, Vec<(&str, &str)>> = HashMap::new();
    let mut tiles: BTreeMap<(u32, u32), (Vec<&Instance>, BTreeMap<&str, &Wire>, BTreeMap<&str, (&Wire, bool)>)> =
        BTreeMap::new();
    for i in &n.instances {
        tiles.entry(i.tile).or_default().0.push(i);
    }
    let mut global: Vec<&Wire> = Vec::new();
    for w in &n.wires {
        let mut touched = BTreeSet::new();
        for ep in std::iter::once(&w.driver).chain(&w.sinks) {
            conns.entry(ep.inst.as_str()).or_default().push((ep.pin.as_str(), w.name.as_str()));
            if let Some(t) = tile_of.get(ep.inst.as_str()) {
                touched.insert(*t);
            }
        }
        if touched.len() <= 1 {
            if let Some(t) = touched.iter().next() {
                tiles.entry(*t).or_default().1.insert(&w.name, w);
            }
        } else {
            global.push(w);
            let driver_tile = tile_of.get(w.driver.inst.as_str()).copied();
            for t in touched {
                tiles.entry(t).or_default().2.insert(&w.name, (w, driver_tile == Some(t)));
            }
        }
    }

    let mut out = String::from(HEADER);
    for (tile, (insts, locals, ports)) in &tiles {
        out.push('\n');
        let _ = write!(out, "module {}", tile_module(*tile));
        if ports.is_empty() {
            out.push_str(";\n");
        } else {
            out.push_str(" (\n");
            let decls: Vec<String> = ports
                .values()
                .map(|(w, is_out)| format!("  {} wire {}{}", if *is_out { "output" } else { "input" }, range(w.width), w.name))
                .collect();
            out.push_str(&decls.join(",\n"));
            out.push_str("\n);\n");
        }
        for w in locals.values() {
            let _ = writeln!(out, "  wire {}{};", range(w.width), w.name);
        }
        for inst in insts {
            let p: Vec<String> = params(inst, &cfg).into_iter().map(|(k, v)| format!(".{k}({v})")).collect();
            let mut c = conns.get(inst.name.as_str()).cloned().unwrap_or_default();
            c.sort_by_key(|(pin, _)| pin_key(pin));
            let c: Vec<String> = c.iter().map(|(pin, net)| format!(".{pin}({net})")).collect();
            let _ = writeln!(out, "  {} #({}) {} ({});", inst.prim.type_name(), p.join(", "), inst.name, c.join(", "));
        }
        out.push_str("endmodule\n");
    }

    out.push_str("\nmodule top;\n");
    for w in &global {
        let _ = writeln!(out, "  wire {}{};", range(w.width), w.name);
    }
    for (tile, (_, _, ports)) in &tiles {
        let c: Vec<String> = ports.keys().map(|p| format!(".{p}({p})")).collect();
        let m = tile_module(*tile);
        let _ = writeln!(out, "  {m} u_{m} ({});", c.join(", "));
    }
    out.push_str("endmodule\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(u64),
    Str(String),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, RtlError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, message: String| RtlError::Parse { line, column, message };
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let bump = |i: &mut usize, line: &mut usize, col: &mut usize| {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        };
        if c.is_whitespace() {
            bump(&mut i, &mut line, &mut col);
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump(&mut i, &mut line, &mut col);
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            bump(&mut i, &mut line, &mut col);
            bump(&mut i, &mut line, &mut col);
            loop {
                if i + 1 >= chars.len() {
                    return Err(err(l0, c0, "unterminated block comment".into()));
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    bump(&mut i, &mut line, &mut col);
                    bump(&mut i, &mut line, &mut col);
                    break;
                }
                bump(&mut i, &mut line, &mut col);
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                s.push(chars[i]);
                bump(&mut i, &mut line, &mut col);
            }
            out.push(Token { tok: Tok::Ident(s), line: l0, column: c0 });
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                bump(&mut i, &mut line, &mut col);
            }
            let v = s.parse().map_err(|_| err(l0, c0, format!("number `{s}` out of range")))?;
            out.push(Token { tok: Tok::Num(v), line: l0, column: c0 });
        } else if c == '"' {
            bump(&mut i, &mut line, &mut col);
            let mut s = String::new();
            while i < chars.len() && chars[i] != '"' {
                if chars[i] == '\n' {
                    return Err(err(l0, c0, "unterminated string".into()));
                }
                s.push(chars[i]);
                bump(&mut i, &mut line, &mut col);
            }
            if i >= chars.len() {
                return Err(err(l0, c0, "unterminated string".into()));
            }
            bump(&mut i, &mut line, &mut col);
            out.push(Token { tok: Tok::Str(s), line: l0, column: c0 });
        } else if "()[]:;,.#".contains(c) {
            out.push(Token { tok: Tok::Punct(c), line: l0, column: c0 });
            bump(&mut i, &mut line, &mut col);
        } else {
            return Err(err(l0, c0, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Param {
    Num(u64),
    Str(String),
}

#[derive(Debug)]
struct InstDecl {
    kind: String,
    name: String,
    params: Vec<(String, Param)>,
    conns: Vec<(String, Option<String>)>,
    line: usize,
    column: usize,
}

#[derive(Debug, Default)]
struct ModuleDecl {
    name: String,
    ports: Vec<String>,
    widths: HashMap<String, u32>,
    insts: Vec<InstDecl>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn loc(&self) -> (usize, usize) {
        self.toks.get(self.pos).map_or(self.end, |t| (t.line, t.column))
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, RtlError> {
        let (line, column) = self.loc();
        Err(RtlError::Parse { line, column, message: message.into() })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn punct(&mut self, c: char) -> Result<(), RtlError> {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, RtlError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn num(&mut self) -> Result<u64, RtlError> {
        match self.peek() {
            Some(Tok::Num(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => self.err("expected number"),
        }
    }

    fn range(&mut self) -> Result<u32, RtlError> {
        if !self.eat_punct('[') {
            return Ok(1);
        }
        let hi = self.num()?;
        self.punct(':')?;
        let lo = self.num()?;
        self.punct(']')?;
        if lo != 0 || hi >= 64 {
            return self.err(format!("unsupported range [{hi}:{lo}]"));
        }
        Ok(hi as u32 + 1)
    }

    fn module(&mut self) -> Result<ModuleDecl, RtlError> {
        if !self.keyword("module") {
            return self.err("expected `module`");
        }
        let mut m = ModuleDecl { name: self.ident()?, ..Default::default() };
        if self.eat_punct('(') {
            if !self.eat_punct(')') {
                loop {
                    if !(self.keyword("input") || self.keyword("output")) {
                        return self.err("expected `input` or `output`");
                    }
                    self.keyword("wire");
                    let w = self.range()?;
                    let name = self.ident()?;
                    m.widths.insert(name.clone(), w);
                    m.ports.push(name);
                    if self.eat_punct(')') {
                        break;
                    }
                    self.punct(',')?;
                }
            }
        }
        self.punct(';')?;
        loop {
            if self.keyword("endmodule") {
                return Ok(m);
            }
            if self.peek().is_none() {
                return self.err("missing `endmodule`");
            }
            if self.keyword("wire") {
                let w = self.range()?;
                loop {
                    let name = self.ident()?;
                    m.widths.insert(name, w);
                    if self.eat_punct(';') {
                        break;
                    }
                    self.punct(',')?;
                }
                continue;
            }
            let (line, column) = self.loc();
            let kind = self.ident()?;
            let mut params = Vec::new();
            if self.eat_punct('#') {
                self.punct('(')?;
                if !self.eat_punct(')') {
                    loop {
                        self.punct('.')?;
                        let k = self.ident()?;
                        self.punct('(')?;
                        let v = match self.next() {
                            Some(Tok::Num(v)) => Param::Num(v),
                            Some(Tok::Str(s)) => Param::Str(s),
                            _ => {
                                self.pos -= 1;
                                return self.err("expected parameter value");
                            }
                        };
                        self.punct(')')?;
                        params.push((k, v));
                        if self.eat_punct(')') {
                            break;
                        }
                        self.punct(',')?;
                    }
                }
            }
            let name = self.ident()?;
            self.punct('(')?;
            let mut conns = Vec::new();
            if !self.eat_punct(')') {
                loop {
                    self.punct('.')?;
                    let pin = self.ident()?;
                    self.punct('(')?;
                    let net = if self.eat_punct(')') {
                        None
                    } else {
                        let n = self.ident()?;
                        self.punct(')')?;
                        Some(n)
                    };
                    conns.push((pin, net));
                    if self.eat_punct(')') {
                        break;
                    }
                    self.punct(',')?;
                }
            }
            self.punct(';')?;
            m.insts.push(InstDecl { kind, name, params, conns, line, column });
        }
    }
}

fn parse_tile_name(name: &str) -> Option<(u32, u32)> {
    let rest = name.strip_prefix("tile_x")?;
    let (x, y) = rest.split_once("_y")?;
    Some((x.parse().ok()?, y.parse().ok()?))
}

fn build_primitive(d: &InstDecl) -> Result<Primitive, RtlError> {
    let perr = |message: String| RtlError::Parse { line: d.line, column: d.column, message };
    let num = |k: &str| -> Result<u64, RtlError> {
        match d.params.iter().find(|(n, _)| n == k) {
            Some((_, Param::Num(v))) => Ok(*v),
            Some(_) => Err(perr(format!("parameter {k} of `{}` must be a number", d.name))),
            None => Err(perr(format!("`{}` is missing parameter {k}", d.name))),
        }
    };
    let string = |k: &str| -> Result<String, RtlError> {
        match d.params.iter().find(|(n, _)| n == k) {
            Some((_, Param::Str(s))) => Ok(s.clone()),
            Some(_) => Err(perr(format!("parameter {k} of `{}` must be a string", d.name))),
            None => Err(perr(format!("`{}` is missing parameter {k}", d.name))),
        }
    };
    let n32 = |k: &str| num(k).and_then(|v| u32::try_from(v).map_err(|_| perr(format!("{k} out of range"))));
    Ok(match d.kind.as_str() {
        "MUX" => Primitive::Mux {
            inputs: n32("K")?,
            width: n32("W")?,
            role: MuxRole::parse(&string("ROLE")?).ok_or_else(|| perr("unknown mux role".into()))?,
        },
        "REG" => Primitive::Reg { width: n32("W")? },
        "FIFO_REG" => Primitive::FifoReg { width: n32("W")?, depth: n32("DEPTH")? },
        "CFG_REG" => Primitive::CfgReg { bits: n32("BITS")? },
        "CORE" => Primitive::Core { name: string("NAME")? },
        "CONST" => Primitive::Const { width: n32("W")?, value: num("VALUE")? },
        "JOIN" => {
            let sel = string("SEL")?;
            let sel_index: Vec<Option<u32>> = if sel.is_empty() {
                Vec::new()
            } else {
                sel.split(',')
                    .map(|s| if s == "-" { Ok(None) } else { s.parse().map(Some).map_err(|_| perr(format!("bad SEL entry `{s}`"))) })
                    .collect::<Result<_, _>>()?
            };
            if sel_index.len() as u64 != num("N")? {
                return Err(perr(format!("JOIN `{}` has N inconsistent with SEL", d.name)));
            }
            Primitive::Join { sel_index }
        }
        other => return Err(RtlError::UnknownPrimitive(other.to_string())),
    })
}

pub fn parse_rtl(src: &str) -> Result<StructNetlist, RtlError> {
    let toks = tokenize(src)?;
    let end = toks.last().map_or((1, 1), |t| (t.line, t.column + 1));
    let mut p = Parser { toks, pos: 0, end };
    let mut modules: BTreeMap<String, ModuleDecl> = BTreeMap::new();
    let mut last = None;
    while p.peek().is_some() {
        let (line, column) = p.loc();
        let m = p.module()?;
        if modules.contains_key(&m.name) {
            return Err(RtlError::Parse { line, column, message: format!("module `{}` defined twice", m.name) });
        }
        last = Some(m.name.clone());
        modules.insert(m.name.clone(), m);
    }
    let Some(last) = last else {
        return Err(RtlError::Parse { line: end.0, column: end.1, message: "no modules".into() });
    };
    let top = if modules.contains_key("top") { "top".to_string() } else { last };

    let mut f = Flattener { modules: &modules, instances: Vec::new(), nets: BTreeMap::new(), params: HashMap::new() };
    f.flatten(&top, &HashMap::new(), (0, 0), 0)?;
    f.finish()
}

struct NetState {
    width: u32,
    driver: Option<Endpoint>,
    sinks: Vec<Endpoint>,
    loc: (usize, usize),
}

struct Flattener<'m> {
    modules: &'m BTreeMap<String, ModuleDecl>,
    instances: Vec<Instance>,
    nets: BTreeMap<String, NetState>,
    params: HashMap<String, Vec<(String, Param)>>,
}

impl<'m> Flattener<'m> {
    fn flatten(
        &mut self,
        module: &str,
        binding: &HashMap<String, String>,
        tile: (u32, u32),
        depth: usize,
    ) -> Result<(), RtlError> {
        let modules = self.modules;
        let m = &modules[module];
        let tile = parse_tile_name(module).unwrap_or(tile);
        if depth > 16 {
            return Err(RtlError::Parse { line: 0, column: 0, message: format!("module `{module}` nests too deeply") });
        }
        for d in &m.insts {
            let perr = |message: String| RtlError::Parse { line: d.line, column: d.column, message };
            let resolve = |net: &str| -> Result<(String, u32), RtlError> {
                let w = *m.widths.get(net).ok_or_else(|| perr(format!("undeclared net `{net}`")))?;
                let global = if m.ports.iter().any(|p| p == net) {
                    binding.get(net).cloned().unwrap_or_else(|| format!("{module}.{net}"))
                } else {
                    net.to_string()
                };
                Ok((global, w))
            };
            if self.modules.contains_key(&d.kind) {
                let mut inner = HashMap::new();
                for (port, net) in &d.conns {
                    if let Some(net) = net {
                        inner.insert(port.clone(), resolve(net)?.0);
                    }
                }
                self.flatten(&d.kind, &inner, tile, depth + 1)?;
                continue;
            }
            let prim = build_primitive(d)?;
            if self.params.contains_key(&d.name) {
                return Err(perr(format!("instance `{}` defined twice", d.name)));
            }
            for (pin, net) in &d.conns {
                let Some(net) = net else { continue };
                let (global, width) = resolve(net)?;
                let ep = Endpoint::new(&d.name, pin);
                let state = self.nets.entry(global.clone()).or_insert(NetState {
                    width,
                    driver: None,
                    sinks: Vec::new(),
                    loc: (d.line, d.column),
                });
                if state.width != width {
                    return Err(perr(format!("net `{global}` declared with widths {} and {width}", state.width)));
                }
                if prim.is_output_pin(pin) {
                    if let Some(prev) = &state.driver {
                        return Err(perr(format!("net `{global}` driven by both {prev} and {ep}")));
                    }
                    state.driver = Some(ep);
                } else {
                    state.sinks.push(ep);
                }
            }
            self.params.insert(d.name.clone(), d.params.clone());
            self.instances.push(Instance { name: d.name.clone(), prim, tile });
        }
        Ok(())
    }

    fn finish(self) -> Result<StructNetlist, RtlError> {
        let mut wires = Vec::new();
        for (name, s) in self.nets {
            let Some(driver) = s.driver else {
                return Err(RtlError::Parse { line: s.loc.0, column: s.loc.1, message: format!("net `{name}` has no driver") });
            };
            wires.push(Wire { name, width: s.width, driver, sinks: s.sinks });
        }
        let mut n = StructNetlist { instances: self.instances, wires, config_map: Vec::new() };
        n.normalize();

        // Select wires also feed valid muxes and joins; the field targets the data mux.
        let shadow: BTreeSet<&str> = n
            .instances
            .iter()
            .filter(|i| matches!(i.prim, Primitive::Mux { role: MuxRole::Valid, .. } | Primitive::Join { .. }))
            .map(|i| i.name.as_str())
            .collect();
        let mut config = Vec::new();
        for inst in &n.instances {
            let Primitive::CfgReg { bits } = inst.prim else { continue };
            let ps = &self.params[&inst.name];
            let get = |k: &str| ps.iter().find(|(n, _)| n == k).map(|(_, v)| v.clone());
            let perr = |message: String| RtlError::Parse { line: 0, column: 0, message };
            let num = |k: &str| match get(k) {
                Some(Param::Num(v)) => u32::try_from(v).map_err(|_| perr(format!("{k} out of range on `{}`", inst.name))),
                _ => Err(perr(format!("CFG_REG `{}` lacks numeric {k}", inst.name))),
            };
            if get("X").is_none() {
                continue;
            }
            let meaning = match get("MEANING") {
                Some(Param::Str(s)) => FieldMeaning::parse(&s).ok_or_else(|| perr(format!("unknown meaning `{s}`")))?,
                _ => return Err(perr(format!("CFG_REG `{}` lacks MEANING", inst.name))),
            };
            let target = n
                .wires
                .iter()
                .find(|w| w.driver.inst == inst.name)
                .and_then(|w| w.sinks.iter().find(|s| !shadow.contains(s.inst.as_str())))
                .cloned()
                .ok_or_else(|| perr(format!("CFG_REG `{}` drives nothing", inst.name)))?;
            config.push(ConfigField {
                name: inst.name.clone(),
                tile: (num("X")?, num("Y")?),
                feature_id: num("FEATURE")?,
                reg_index: num("REG")?,
                bit_offset: num("OFFSET")?,
                bit_width: bits,
                target,
                meaning,
            });
        }
        n.config_map = config;
        n.normalize();
        Ok(n)
    }
}
