//! Line-oriented control endpoint for a running farm.
//!
//! ```text
//! list                      -> one "<serial> <type> <addr> <faults>" line per device, then "end"
//! inject <serial> <fault>   -> "ok" | "error <message>"
//! clear <serial>            -> "ok" | "error <message>"
//! ```
//!
//! Serials are written as `0x`-prefixed hex.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::debug;

use crate::device::Fault;
use crate::farm::DeviceFarm;

pub fn parse_serial(text: &str) -> Option<u32> {
    match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16).ok(),
        None => text.parse().ok(),
    }
}

pub fn execute(farm: &DeviceFarm, line: &str) -> Vec<String> {
    let words: Vec<&str> = line.split_whitespace().collect();
    let reply = |r: Result<(), String>| vec![r.map_or_else(|e| format!("error {e}"), |()| "ok".into())];
    match words.as_slice() {
        ["list"] => {
            let mut out: Vec<String> = farm
                .devices()
                .iter()
                .map(|d| {
                    let faults: Vec<_> = d.faults().iter().map(|f| f.as_str()).collect();
                    let faults = if faults.is_empty() { "-".to_string() } else { faults.join(",") };
                    format!("{:#010x} {} {} {}", d.serial_number(), d.sensor_type(), d.addr(), faults)
                })
                .collect();
            out.push("end".into());
            out
        }
        ["inject", serial, fault] => reply((|| {
            let serial = parse_serial(serial).ok_or_else(|| format!("bad serial `{serial}`"))?;
            let fault: Fault = fault.parse()?;
            farm.inject(serial, fault).map_err(|e| e.to_string())
        })()),
        ["clear", serial] => reply((|| {
            let serial = parse_serial(serial).ok_or_else(|| format!("bad serial `{serial}`"))?;
            farm.clear_faults(serial).map_err(|e| e.to_string())
        })()),
        _ => vec![format!("error unknown command `{}`", line.trim())],
    }
}

pub struct ControlServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ControlServer {
    pub fn start(farm: Arc<DeviceFarm>, bind: SocketAddr) -> io::Result<Self> {
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&shutdown);
        let thread = thread::spawn(move || {
            for stream in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    if let Err(e) = serve(&farm, stream) {
                        debug!("control connection ended: {e}");
                    }
                }
            }
        });
        Ok(ControlServer { addr, shutdown, thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for ControlServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(farm: &DeviceFarm, stream: TcpStream) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        for out in execute(farm, &line?) {
            writeln!(writer, "{out}")?;
        }
    }
    Ok(())
}

/// Sends one command and collects its reply lines.
pub fn send_command(addr: impl ToSocketAddrs, command: &str) -> io::Result<Vec<String>> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    writeln!(stream, "{command}")?;
    let multi = command.trim() == "list";
    let mut lines = Vec::new();
    for line in BufReader::new(stream).lines() {
        let line = line?;
        let done = !multi || line == "end";
        lines.push(line);
        if done {
            break;
        }
    }
    Ok(lines)
}
