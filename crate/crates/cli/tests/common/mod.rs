#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dapi_cli::config::{EventType, WindowConfig};
use dapi_cli::Config;

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn reference(name: &str) -> Config {
    Config::load(&configs_dir().join(format!("{name}.toml"))).unwrap()
}

/// DERs 1 and 2 of the reference network on one link, 2 s horizon, one
/// synthesis grid point.
pub fn two_der() -> Config {
    let mut c = reference("five_der_init");
    c.name = "two_der".into();
    c.ders.truncate(2);
    c.coupling.links = vec![[1, 2]];
    c.coupling.a = vec![1.0];
    c.coupling.b = vec![1.0];
    c.grid.lines = vec![[1, 2]];
    c.grid.line_susceptance_s = vec![0.7];
    c.grid.loads.truncate(2);
    c.events.retain(|e| e.kind == EventType::LoadStep && matches!(e.load.as_deref(), Some("L1" | "L2")));
    c.sim.horizon_s = 2.0;
    c.analysis.windows = vec![WindowConfig {
        label: "Initialization".into(),
        t_begin_s: 0.0,
        t_end_s: 2.0,
    }];
    c.analysis.ellipsoid_trials = 20;
    c.analysis.ellipsoid_horizon_s = 2.0;
    c.synthesis.kappa_y = vec![1000.0];
    c.synthesis.tau_v = vec![1.0];
    c.synthesis.tau_h = vec![0.1];
    c.synthesis.tau_g = vec![0.1];
    c
}

pub fn write_config(dir: &Path, c: &Config) -> PathBuf {
    let p = dir.join(format!("{}.toml", c.name));
    std::fs::write(&p, c.to_toml().unwrap()).unwrap();
    p
}

pub fn dapi(args: &[&str]) -> Output {
    dapi_env(args, &[])
}

pub fn dapi_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dapi"));
    cmd.args(args).env_remove("DAPI_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
