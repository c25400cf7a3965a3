use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power base for the per-unit system, kVA.
pub const S_BASE_KVA: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    /// Line-to-line nominal voltage, V.
    pub v_nominal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Ω, whole line
    pub r: f64,
    /// Ω, whole line
    pub x: f64,
    /// A; optional in the file so that a missing value gives a named error.
    pub ampacity: Option<f64>,
    /// m
    #[serde(default)]
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transformer {
    /// Rating of one unit, kVA.
    pub s_rated: f64,
    #[serde(default = "one")]
    pub n_parallel: u32,
    pub lv_bus: String,
    /// Optional planning rating that replaces the nameplate sum.
    #[serde(default)]
    pub virtual_rating: Option<f64>,
}

fn one() -> u32 {
    1
}

impl Transformer {
    /// Parallel units are treated as one unit of summed rating.
    pub fn nameplate(&self) -> f64 {
        self.s_rated * self.n_parallel as f64
    }

    pub fn rating(&self, use_virtual: bool) -> f64 {
        match (use_virtual, self.virtual_rating) {
            (true, Some(v)) => v,
            _ => self.nameplate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(default)]
    pub name: String,
    pub transformer: Transformer,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub injections: BTreeMap<String, String>,
}

/// A validated radial network. Buses are ordered breadth-first from the slack, so every
/// bus appears after its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub transformer: Transformer,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub injections: BTreeMap<String, String>,
    /// Per bus (BFS order): parent bus and the line feeding it; `None` for the slack.
    pub(crate) parent: Vec<Option<(usize, usize)>>,
    pub(crate) bus_index: BTreeMap<String, usize>,
    /// Per-unit line impedances.
    pub(crate) z_pu: Vec<(f64, f64)>,
    /// Base current per line, A.
    pub(crate) i_base: Vec<f64>,
}

impl Network {
    pub fn from_file(file: NetworkFile) -> Result<Self> {
        let net_err = |m: String| Err(Error::Network(m));
        if !(file.transformer.s_rated > 0.0) || file.transformer.n_parallel == 0 {
            return net_err("transformer rating must be positive".into());
        }
        let mut index = BTreeMap::new();
        for (i, b) in file.buses.iter().enumerate() {
            if !(b.v_nominal > 0.0) {
                return net_err(format!("bus {}: nominal voltage must be positive", b.id));
            }
            if index.insert(b.id.clone(), i).is_some() {
                return net_err(format!("duplicate bus id {}", b.id));
            }
        }
        let Some(&slack) = index.get(&file.transformer.lv_bus) else {
            return net_err(format!("transformer LV bus {} not found", file.transformer.lv_bus));
        };
        let mut ends = Vec::with_capacity(file.lines.len());
        for l in &file.lines {
            let f = *index
                .get(&l.from)
                .ok_or_else(|| Error::Network(format!("line {}: unknown bus {}", l.id, l.from)))?;
            let t = *index
                .get(&l.to)
                .ok_or_else(|| Error::Network(format!("line {}: unknown bus {}", l.id, l.to)))?;
            match l.ampacity {
                None => return net_err(format!("line {}: missing ampacity", l.id)),
                Some(a) if !(a > 0.0) => return net_err(format!("line {}: ampacity must be positive", l.id)),
                _ => {}
            }
            if !(l.r >= 0.0) || !l.x.is_finite() {
                return net_err(format!("line {}: resistance must be non-negative", l.id));
            }
            if f == t {
                return net_err(format!("line {}: self-loop at bus {}", l.id, l.from));
            }
            if file.buses[f].v_nominal != file.buses[t].v_nominal {
                return net_err(format!("line {} joins buses of different nominal voltage", l.id));
            }
            ends.push((f, t));
        }

        // Cycle detection with union-find; report the edges of the first cycle found.
        let n = file.buses.len();
        let mut uf: Vec<usize> = (0..n).collect();
        fn find(uf: &mut Vec<usize>, mut a: usize) -> usize {
            while uf[a] != a {
                uf[a] = uf[uf[a]];
                a = uf[a];
            }
            a
        }
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (li, &(f, t)) in ends.iter().enumerate() {
            let (rf, rt) = (find(&mut uf, f), find(&mut uf, t));
            if rf == rt {
                let mut cycle = tree_path(&adj, f, t)
                    .into_iter()
                    .map(|l| file.lines[l].id.clone())
                    .collect::<Vec<_>>();
                cycle.push(file.lines[li].id.clone());
                return net_err(format!("network is not radial; cycle through lines {}", cycle.join(", ")));
            }
            uf[rf] = rt;
            adj[f].push((t, li));
            adj[t].push((f, li));
        }

        let mut order = Vec::with_capacity(n);
        let mut parent_orig: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([slack]);
        seen[slack] = true;
        while let Some(b) = queue.pop_front() {
            order.push(b);
            for &(c, l) in &adj[b] {
                if !seen[c] {
                    seen[c] = true;
                    parent_orig[c] = Some((b, l));
                    queue.push_back(c);
                }
            }
        }
        if order.len() != n {
            let missing: Vec<&str> = (0..n)
                .filter(|&b| !seen[b])
                .map(|b| file.buses[b].id.as_str())
                .collect();
            return net_err(format!("buses not connected to the transformer: {}", missing.join(", ")));
        }

        let mut new_pos = vec![0; n];
        for (k, &b) in order.iter().enumerate() {
            new_pos[b] = k;
        }
        let buses: Vec<Bus> = order.iter().map(|&b| file.buses[b].clone()).collect();
        let parent = order
            .iter()
            .map(|&b| parent_orig[b].map(|(p, l)| (new_pos[p], l)))
            .collect();
        let bus_index = buses.iter().enumerate().map(|(i, b)| (b.id.clone(), i)).collect();

        for (building, bus) in &file.injections {
            if !index.contains_key(bus) {
                return net_err(format!("injection {building}: unknown bus {bus}"));
            }
        }

        let mut z_pu = Vec::with_capacity(file.lines.len());
        let mut i_base = Vec::with_capacity(file.lines.len());
        for (l, &(f, _)) in file.lines.iter().zip(&ends) {
            let v = file.buses[f].v_nominal;
            let z_base = v * v / (S_BASE_KVA * 1e3);
            z_pu.push((l.r / z_base, l.x / z_base));
            i_base.push(S_BASE_KVA * 1e3 / (3f64.sqrt() * v));
        }

        Ok(Network {
            name: file.name,
            transformer: file.transformer,
            buses,
            lines: file.lines,
            injections: file.injections,
            parent,
            bus_index,
            z_pu,
            i_base,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: NetworkFile = toml::from_str(text)?;
        Self::from_file(file)
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            name: self.name.clone(),
            transformer: self.transformer.clone(),
            buses: self.buses.clone(),
            lines: self.lines.clone(),
            injections: self.injections.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("network serialises")
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn slack(&self) -> usize {
        0
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.bus_index.get(id).copied()
    }

    /// Parent bus and feeding line per bus, in the network's bus order.
    pub fn parents(&self) -> &[Option<(usize, usize)>] {
        &self.parent
    }

    /// Per-unit series impedance of each line.
    pub fn line_impedance_pu(&self, line: usize) -> (f64, f64) {
        self.z_pu[line]
    }

    pub fn line_base_current(&self, line: usize) -> f64 {
        self.i_base[line]
    }

    pub fn ampacity(&self, line: usize) -> f64 {
        self.lines[line].ampacity.unwrap_or(f64::INFINITY)
    }
}

pub fn load_network(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path)?;
    Network::parse(&text).map_err(|e| match e {
        Error::TomlDe(te) => Error::Network(format!("{}: {te}", path.display())),
        other => other,
    })
}

fn tree_path(adj: &[Vec<(usize, usize)>], from: usize, to: usize) -> Vec<usize> {
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; adj.len()];
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(b) = queue.pop_front() {
        if b == to {
            break;
        }
        for &(c, l) in &adj[b] {
            if !seen[c] {
                seen[c] = true;
                prev[c] = Some((b, l));
                queue.push_back(c);
            }
        }
    }
    let mut path = Vec::new();
    let mut cur = to;
    while let Some((p, l)) = prev[cur] {
        path.push(l);
        cur = p;
    }
    path.reverse();
    path
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"
name = "tiny"
[transformer]
s_rated = 250
lv_bus = "lv"

[[buses]]
id = "lv"
v_nominal = 400

[[buses]]
id = "n1"
v_nominal = 400

[[lines]]
id = "l1"
from = "lv"
to = "n1"
r = 0.1
x = 0.05
ampacity = 200

[injections]
house = "n1"
"#;

    #[test]
    fn minimal() {
        let n = Network::parse(TWO_BUS).unwrap();
        assert_eq!(n.lines.len(), 1);
        assert_eq!(n.bus_index("n1"), Some(1));
        assert_eq!(n.transformer.rating(true), 250.0);
        let z_base = 400.0 * 400.0 / 1e5;
        assert!((n.line_impedance_pu(0).0 - 0.1 / z_base).abs() < 1e-15);
        let again = Network::parse(&n.to_toml()).unwrap();
        assert_eq!(again, n);
    }

    #[test]
    fn cycle_is_named() {
        let text = TWO_BUS.replace(
            "[injections]",
            "[[buses]]\nid = \"n2\"\nv_nominal = 400\n\n[[lines]]\nid = \"l2\"\nfrom = \"n1\"\nto = \"n2\"\nr = 0.1\nx = 0.0\nampacity = 100\n\n[[lines]]\nid = \"l3\"\nfrom = \"n2\"\nto = \"lv\"\nr = 0.1\nx = 0.0\nampacity = 100\n\n[injections]",
        );
        let msg = Network::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("l1") && msg.contains("l2") && msg.contains("l3"), "{msg}");
    }

    #[test]
    fn disconnected_and_missing_ampacity() {
        let text = TWO_BUS.replace("[injections]", "[[buses]]\nid = \"island\"\nv_nominal = 400\n\n[injections]");
        let msg = Network::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("island"), "{msg}");
        let text = TWO_BUS.replace("ampacity = 200\n", "");
        let msg = Network::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("l1") && msg.contains("ampacity"), "{msg}");
    }
}
