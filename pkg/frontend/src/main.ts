import { ApiClient } from './api';
import { App } from './app';
import './style.css';

const root = document.getElementById('app');
if (!root) throw new Error('missing #app mount point');
const app = new App(root, new ApiClient());
void app.bootstrap();
