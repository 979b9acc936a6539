//! Expected-shape assertions for each scenario kind, run by `--check`.
//!
//! A check whose inputs are missing from the sweep (say, after an override
//! trimmed the values) is skipped rather than failed.

use std::fmt;

use crate::runner::ScenarioResult;
use crate::scenario::{Kind, Scenario, SweepValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub scenario: String,
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        write!(f, "{tag} {}: {} ({})", self.scenario, self.name, self.detail)
    }
}

struct Checker<'a> {
    r: &'a ScenarioResult,
    out: Vec<Check>,
}

impl Checker<'_> {
    fn mbps(&self, label: &str, x: i64) -> Option<f64> {
        self.r
            .row(label, &SweepValue::Int(x))
            .map(|row| row.throughput() / 1e6)
    }

    fn makespan(&self, label: &str, x: i64) -> Option<f64> {
        self.r.row(label, &SweepValue::Int(x)).map(|row| row.makespan)
    }

    fn ints(&self, label: &str) -> Vec<i64> {
        self.r
            .series(label)
            .iter()
            .filter_map(|row| match row.sweep {
                SweepValue::Int(v) => Some(v),
                _ => None,
            })
            .collect()
    }

    fn labels(&self) -> Vec<String> {
        let mut v: Vec<String> = Vec::new();
        for row in &self.r.rows {
            if !v.contains(&row.path) {
                v.push(row.path.clone());
            }
        }
        v
    }

    fn record(&mut self, name: &'static str, outcome: Option<(bool, String)>) {
        let (status, detail) = match outcome {
            Some((true, d)) => (Status::Pass, d),
            Some((false, d)) => (Status::Fail, d),
            None => (Status::Skip, "inputs not in sweep".into()),
        };
        self.out.push(Check {
            scenario: self.r.id.clone(),
            name,
            status,
            detail,
        });
    }

    fn netperf(&mut self) {
        let large: Vec<i64> = self.ints("LAN").into_iter().filter(|b| *b >= 1 << 20).collect();
        let agree = if large.is_empty() {
            None
        } else {
            let mut worst = 0.0f64;
            let mut ok = true;
            for b in &large {
                match (self.mbps("LAN", *b), self.mbps("WAN", *b)) {
                    (Some(l), Some(w)) => worst = worst.max((w / l - 1.0).abs()),
                    _ => ok = false,
                }
            }
            ok.then(|| (worst <= 0.02, format!("largest LAN/WAN gap {:.2}%", worst * 100.0)))
        };
        self.record("LAN and WAN agree within 2% for buffers of 1 MiB and up", agree);
        let small = self
            .mbps("LAN", 65536)
            .zip(self.mbps("WAN", 65536))
            .map(|(l, w)| (l >= 3.0 * w, format!("LAN {l:.2} vs WAN {w:.2} MB/s")));
        self.record("LAN at least 3x WAN at 64 KiB buffers", small);
    }

    fn streams(&mut self) {
        for label in self.labels() {
            let Some(buffer) = label.rsplit('@').next().and_then(|b| b.parse::<u64>().ok()) else {
                continue;
            };
            let pair = self.mbps(&label, 1).zip(self.mbps(&label, 4));
            if buffer <= 100_000 {
                let o = pair.map(|(one, four)| (four >= 3.0 * one, format!("{label}: 1 stream {one:.2}, 4 streams {four:.2} MB/s")));
                self.record("4 streams reach 3x one stream at small windows", o);
            } else if buffer >= 1 << 20 {
                let o = pair.map(|(one, four)| (four <= 1.05 * one, format!("{label}: 1 stream {one:.2}, 4 streams {four:.2} MB/s")));
                self.record("4 streams gain at most 5% at large windows", o);
            }
        }
    }

    fn client_api(&mut self, packet: i64) {
        for dir in ["read", "write"] {
            let (lan, wan) = (format!("LAN-{dir}"), format!("WAN-{dir}"));
            let points: Vec<i64> = self.ints(&lan).into_iter().filter(|b| *b >= packet).collect();
            let ratios: Option<Vec<f64>> = points
                .iter()
                .map(|b| Some(self.mbps(&wan, *b)? / self.mbps(&lan, *b)?))
                .collect();
            let o = ratios.filter(|r| !r.is_empty()).map(|r| {
                let ok = r.iter().all(|x| (0.45..=0.55).contains(x));
                let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = r.iter().copied().fold(0.0, f64::max);
                (ok, format!("{dir}: WAN/LAN in [{lo:.3}, {hi:.3}]"))
            });
            self.record("WAN about half of LAN once the buffer covers a packet", o);
        }
    }

    fn pftp_read(&mut self) {
        for label in self.labels().into_iter().filter(|l| l.ends_with("-null")) {
            let agg: Option<Vec<f64>> = (1..=6).map(|n| self.mbps(&label, n)).collect();
            let o = agg.map(|a| {
                let rising = a[..4].windows(2).all(|w| w[1] > w[0]);
                let capped = a[4] <= a[3] && a[5] <= a[3];
                let shown: Vec<String> = a.iter().map(|x| format!("{x:.1}")).collect();
                (rising && capped, format!("{label}: {}", shown.join(", ")))
            });
            self.record("aggregate rises from 1 to 4 files and not beyond", o);
        }
        let serial = self
            .mbps("LAN-disk", 1)
            .map(|x| ((19.0..=21.0).contains(&x), format!("LAN-disk single file {x:.2} MB/s")));
        self.record("serial disk-to-disk read near 20 MB/s", serial);
    }

    fn tape(&mut self, drives: i64) {
        let off = (1..=3).map(|n| self.makespan("offdrive", n)).collect::<Option<Vec<f64>>>();
        let o = off.map(|m| {
            let (r21, r32) = (m[1] / m[0], m[2] / m[1]);
            (r32 > 1.3 && r21 < 1.1, format!("m2/m1 {r21:.3}, m3/m2 {r32:.3}"))
        });
        self.record("third off-drive file waits for an accessor", o);
        let pts = self.ints("premounted");
        let one = self.mbps("premounted", 1);
        let o = one.filter(|_| pts.len() > 1).map(|one| {
            let mut worst = 0.0f64;
            for &n in pts.iter().filter(|n| **n <= drives) {
                let x = self.mbps("premounted", n).expect("listed");
                worst = worst.max((x / (n as f64 * one) - 1.0).abs());
            }
            (worst <= 0.01, format!("largest deviation from linear {:.3}%", worst * 100.0))
        });
        self.record("premounted throughput linear up to the drive count", o);
    }

    fn write(&mut self, disk_rate: f64) {
        for label in self.labels().into_iter().filter(|l| l.ends_with("-disk")) {
            let pts = self.ints(&label);
            let Some(one) = self.mbps(&label, 1) else {
                self.record("contention on the client disk slows each file", None);
                continue;
            };
            let slower = pts
                .iter()
                .filter(|n| **n > 1)
                .all(|&n| self.mbps(&label, n).is_some_and(|x| x < n as f64 * one));
            let peak = pts
                .iter()
                .filter_map(|&n| self.mbps(&label, n))
                .fold(0.0, f64::max);
            let o = Some((
                slower && peak <= disk_rate / 1e6,
                format!("{label}: 1 file {one:.2}, peak {peak:.2} MB/s"),
            ));
            self.record("contention on the client disk slows each file", o);
        }
        let pairs: Option<Vec<(f64, f64)>> = self
            .ints("LAN-disk")
            .iter()
            .map(|n| self.mbps("WAN-disk", *n).zip(self.mbps("LAN-disk", *n)))
            .collect();
        let o = pairs
            .filter(|p| !p.is_empty())
            .map(|p| (p.iter().all(|(w, l)| w < l), "WAN below LAN at every file count".to_string()));
        self.record("WAN writes slower than LAN", o);
    }

    fn relay(&mut self) {
        let Some(prefix) = self
            .labels()
            .into_iter()
            .find_map(|l| l.strip_suffix("-relay").map(str::to_string))
        else {
            self.record("relay at most 0.55x colocated", None);
            return;
        };
        let (col, rel, dir) = (
            format!("{prefix}-colocated"),
            format!("{prefix}-relay"),
            format!("{prefix}-direct"),
        );
        let max = self.ints(&rel).into_iter().max();
        let o = max.and_then(|n| {
            let (c, r) = (self.mbps(&col, n)?, self.mbps(&rel, n)?);
            Some((r <= 0.55 * c, format!("{n} files: relay {r:.2}, colocated {c:.2} MB/s")))
        });
        self.record("relay at most 0.55x colocated", o);
        let gaps: Option<Vec<f64>> = self
            .ints(&col)
            .iter()
            .map(|n| Some((self.mbps(&col, *n)? / self.mbps(&dir, *n)? - 1.0).abs()))
            .collect();
        let o = gaps.filter(|g| !g.is_empty()).map(|g| {
            let worst = g.iter().copied().fold(0.0, f64::max);
            (worst <= 0.01, format!("largest colocated/direct gap {:.3}%", worst * 100.0))
        });
        self.record("colocated matches direct within 1%", o);
    }

    fn stage_in(&mut self) {
        let find = |place: &str| {
            self.r
                .rows
                .iter()
                .find(|r| r.sweep == SweepValue::Text(place.into()))
        };
        let (col, sep) = (find("colocated"), find("separated"));
        let routes = col.zip(sep).map(|(c, s)| {
            let ok = c.path.ends_with("-direct") && s.path.ends_with("-relay") && c.elapsed.len() == 1;
            (ok, format!("colocated via {}, separated via {}", c.path, s.path))
        });
        self.record("one stage-in, direct when colocated and relayed otherwise", routes);
        let speed = col.zip(sep).map(|(c, s)| {
            let (a, b) = (c.throughput() / 1e6, s.throughput() / 1e6);
            (b < a, format!("colocated {a:.2}, separated {b:.2} MB/s"))
        });
        self.record("relayed stage-in slower", speed);
    }
}

/// Checks for one result of `scenario`.
pub fn check_result(result: &ScenarioResult, scenario: &Scenario) -> Vec<Check> {
    let mut c = Checker {
        r: result,
        out: Vec::new(),
    };
    match result.kind {
        Kind::Netperf => c.netperf(),
        Kind::Streams => c.streams(),
        Kind::ClientApi => c.client_api(scenario.transfer.packet() as i64),
        Kind::PftpRead => c.pftp_read(),
        Kind::Tape => c.tape(
            scenario
                .library
                .drives
                .unwrap_or(hsmsim_core::storage::tape::DEFAULT_DRIVES) as i64,
        ),
        Kind::PftpWrite => c.write(
            scenario
                .topology
                .client_disk_rate
                .unwrap_or(hsmsim_core::storage::disk::CLIENT_DISK_RATE),
        ),
        Kind::Relay => c.relay(),
        Kind::XrslStagein => c.stage_in(),
    }
    c.out
}
