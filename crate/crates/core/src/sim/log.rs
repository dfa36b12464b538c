//! In-memory CSV streams, flushed to disk at the end of a run.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct CsvStream {
    pub name: &'static str,
    pub text: String,
}

impl CsvStream {
    fn new(name: &'static str, header: &str) -> Self {
        Self { name, text: format!("{header}\n") }
    }

    pub fn row(&mut self, stamp: f64, fields: std::fmt::Arguments<'_>) {
        let _ = writeln!(self.text, "{stamp:.6},{fields}");
    }

    pub fn rows(&self) -> usize {
        self.text.lines().count().saturating_sub(1)
    }
}

#[derive(Debug, Clone)]
pub struct Logs {
    pub poses: CsvStream,
    pub estimates: CsvStream,
    pub tracks: CsvStream,
    pub references: CsvStream,
    pub events: CsvStream,
    pub objects: CsvStream,
}

impl Default for Logs {
    fn default() -> Self {
        Self {
            poses: CsvStream::new("poses.csv", "stamp,agent,x,y,z,vx,vy,vz"),
            estimates: CsvStream::new("estimates.csv", "stamp,agent,x,y,z,bx,by,bz"),
            tracks: CsvStream::new("tracks.csv", "stamp,agent,track,color,x,y,z,vx,vy,confirmed"),
            references: CsvStream::new("references.csv", "stamp,agent,state,x,y,z,vx,vy,vz"),
            events: CsvStream::new("events.csv", "stamp,agent,kind,detail"),
            objects: CsvStream::new("objects.csv", "stamp,object,status,x,y,z"),
        }
    }
}

impl Logs {
    pub fn streams(&self) -> [&CsvStream; 6] {
        [&self.poses, &self.estimates, &self.tracks, &self.references, &self.events, &self.objects]
    }

    pub fn write_all(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        self.streams()
            .iter()
            .map(|s| {
                let path = dir.join(s.name);
                std::fs::write(&path, &s.text)?;
                Ok(path)
            })
            .collect()
    }
}
