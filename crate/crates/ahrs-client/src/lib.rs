//! Thin blocking client for the estimation service.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use ahrs_api as api;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),
    /// Structured service error with its stable code.
    #[error("{code}: {message}")]
    Api { code: String, message: String },
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            ClientError::Transport(_) => None,
        }
    }
}

pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    pub fn new(base_url: &str) -> Self {
        Client {
            base: base_url.trim_end_matches('/').to_string(),
            http: reqwest::blocking::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn decode_error(response: reqwest::blocking::Response) -> ClientError {
        let status = response.status();
        match response.json::<api::ErrorBody>() {
            Ok(body) => ClientError::Api {
                code: body.error.code,
                message: body.error.message,
            },
            Err(_) => ClientError::Api {
                code: api::error_code::INTERNAL.to_string(),
                message: format!("service returned HTTP {status}"),
            },
        }
    }

    fn post_json<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        req: &Req,
    ) -> Result<Resp, ClientError> {
        let response = self.http.post(self.url(path)).json(req).send()?;
        if response.status().is_success() {
            Ok(response.json()?)
        } else {
            Err(Self::decode_error(response))
        }
    }

    pub fn health(&self) -> Result<(), ClientError> {
        let response = self.http.get(self.url("/health")).send()?;
        if response.status().is_success() {
            Ok(())
        } else {
            Err(Self::decode_error(response))
        }
    }

    pub fn tune(&self, req: &api::TuneRequest) -> Result<api::TuneReport, ClientError> {
        self.post_json("/v1/tune", req)
    }

    /// Returns the simulated log as CSV text.
    pub fn simulate(&self, req: &api::SimulateRequest) -> Result<String, ClientError> {
        let response = self.http.post(self.url("/v1/simulate")).json(req).send()?;
        if response.status().is_success() {
            Ok(response.text()?)
        } else {
            Err(Self::decode_error(response))
        }
    }

    pub fn run(&self, req: &api::RunRequest) -> Result<api::RunResponse, ClientError> {
        self.post_json("/v1/run", req)
    }

    pub fn compare(&self, req: &api::CompareRequest) -> Result<api::CompareResponse, ClientError> {
        self.post_json("/v1/compare", req)
    }

    pub fn selftest(&self) -> Result<api::SelftestResponse, ClientError> {
        self.post_json("/v1/selftest", &serde_json::json!({}))
    }

    pub fn create_session(
        &self,
        req: &api::SessionRequest,
    ) -> Result<api::SessionCreated, ClientError> {
        self.post_json("/v1/sessions", req)
    }

    pub fn step_session(
        &self,
        id: &str,
        req: &api::StepRequest,
    ) -> Result<api::StepResponse, ClientError> {
        self.post_json(&format!("/v1/sessions/{id}/step"), req)
    }

    pub fn session_info(&self, id: &str) -> Result<api::SessionInfo, ClientError> {
        let response = self
            .http
            .get(self.url(&format!("/v1/sessions/{id}")))
            .send()?;
        if response.status().is_success() {
            Ok(response.json()?)
        } else {
            Err(Self::decode_error(response))
        }
    }

    pub fn delete_session(&self, id: &str) -> Result<(), ClientError> {
        let response = self
            .http
            .delete(self.url(&format!("/v1/sessions/{id}")))
            .send()?;
        if response.status().is_success() {
            Ok(())
        } else {
            Err(Self::decode_error(response))
        }
    }
}
