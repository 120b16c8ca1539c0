//! Blocking client for a remote service. Implements [`ControlPlane`] so an
//! episode can run against it unchanged.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use reqwest::blocking::{Client, RequestBuilder};
use serde::de::DeserializeOwned;
use serde_json::Value;

use iraas_core::control::{
    ClosureReport, ControlError, ControlPlane, In1Ack, In1Message, In2Message, QosReport,
    RisDescriptor, RisState, SessionId, SessionOutcome, SessionRequest,
};
use iraas_core::optimizer::RisId;

use crate::server::{Progress, Routed, StreamError};

pub struct Remote {
    base: String,
    http: Client,
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

fn transport(e: impl std::fmt::Display) -> ControlError {
    ControlError::Transport(e.to_string())
}

impl Remote {
    pub fn connect(http: SocketAddr, stream: SocketAddr) -> Result<Self, ControlError> {
        let writer = TcpStream::connect(stream).map_err(transport)?;
        writer.set_nodelay(true).map_err(transport)?;
        let reader = BufReader::new(writer.try_clone().map_err(transport)?);
        let http_client = Client::builder().timeout(None).build().map_err(transport)?;
        Ok(Self {
            base: format!("http://{http}"),
            http: http_client,
            reader,
            writer,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn call<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T, ControlError> {
        let resp = req.send().map_err(transport)?;
        let status = resp.status();
        let body = resp.text().map_err(transport)?;
        if status.is_success() {
            let body = if body.is_empty() { "null" } else { &body };
            serde_json::from_str(body).map_err(|e| ControlError::Malformed(e.to_string()))
        } else {
            Err(serde_json::from_str(&body)
                .unwrap_or_else(|_| transport(format!("HTTP {status}: {body}"))))
        }
    }

    /// Sends one stream line and reads its reply.
    fn exchange(&mut self, line: &str) -> Result<String, ControlError> {
        self.writer.write_all(line.as_bytes()).map_err(transport)?;
        self.writer.write_all(b"\n").map_err(transport)?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply).map_err(transport)? == 0 {
            return Err(transport("stream closed"));
        }
        let value: Value =
            serde_json::from_str(&reply).map_err(|e| ControlError::Malformed(e.to_string()))?;
        if value.get("error").is_some() {
            let e: StreamError = serde_json::from_value(value)
                .map_err(|e| ControlError::Malformed(e.to_string()))?;
            return Err(e.error);
        }
        Ok(reply)
    }
}

impl ControlPlane for Remote {
    fn register_ris(&mut self, descriptor: RisDescriptor) -> Result<RisId, ControlError> {
        self.call(self.http.post(self.url("/ris")).json(&descriptor))
    }

    fn ris_state(&mut self, id: &RisId) -> Result<RisState, ControlError> {
        self.call(self.http.get(self.url(&format!("/ris/{id}"))))
    }

    fn create_session(&mut self, request: SessionRequest) -> Result<SessionOutcome, ControlError> {
        self.call(self.http.post(self.url("/sessions")).json(&request))
    }

    fn terminate_session(&mut self, id: SessionId) -> Result<ClosureReport, ControlError> {
        self.call(self.http.delete(self.url(&format!("/sessions/{}", id.0))))
    }

    fn session_qos(&mut self, id: SessionId) -> Result<QosReport, ControlError> {
        self.call(self.http.get(self.url(&format!("/sessions/{}/qos", id.0))))
    }

    fn report_progress(
        &mut self,
        id: SessionId,
        iterations: u64,
        best_objective: Option<f64>,
    ) -> Result<(), ControlError> {
        let body = Progress {
            iterations,
            best_objective,
        };
        self.call(
            self.http
                .post(self.url(&format!("/sessions/{}/progress", id.0)))
                .json(&body),
        )
    }

    fn push_coefficients(&mut self, msg: &In1Message) -> Result<In1Ack, ControlError> {
        let reply = self.exchange(&msg.encode())?;
        Ok(In1Ack::decode(reply.trim_end())?)
    }

    fn publish_feedback(&mut self, msg: &In2Message) -> Result<bool, ControlError> {
        let reply = self.exchange(&msg.encode())?;
        let routed: Routed =
            serde_json::from_str(&reply).map_err(|e| ControlError::Malformed(e.to_string()))?;
        Ok(routed.routed)
    }

    fn expect_feedback(&mut self, tag: &str) -> Result<(), ControlError> {
        self.call(
            self.http
                .post(self.url("/feedback/expectations"))
                .query(&[("tag", tag)]),
        )
    }

    fn cancel_feedback(&mut self, tag: &str) -> Result<(), ControlError> {
        self.call(
            self.http
                .delete(self.url("/feedback/expectations"))
                .query(&[("tag", tag)]),
        )
    }

    fn await_feedback(&mut self, tag: &str, timeout: Duration) -> Result<In2Message, ControlError> {
        let ms = timeout.as_millis().to_string();
        let msg: In2Message = self.call(
            self.http
                .get(self.url("/feedback"))
                .query(&[("tag", tag), ("timeout_ms", ms.as_str())]),
        )?;
        msg.validate()?;
        Ok(msg)
    }
}
